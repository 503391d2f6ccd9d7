#include "mambair/optim.hpp"

#include <cmath>

#include "mambair/errors.hpp"

namespace mambair {

void adam_step(ModelState& params, const std::map<std::string, std::vector<double>>& grads,
               AdamState& state, const AdamHyper& hyper, bool float_grid) {
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(hyper.beta1, t);
  const double bc2 = 1.0 - std::pow(hyper.beta2, t);
  for (auto& [name, param] : params) {
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const std::vector<double>& g = git->second;
    auto p = param.data_mut();
    if (g.size() != p.size()) throw ShapeError("adam_step: gradient size mismatch for " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (v.empty()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g[i];
      v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= hyper.lr * mhat / (std::sqrt(vhat) + hyper.eps);
      if (float_grid) {
        p[i] = round_to_float(p[i]);
        m[i] = round_to_float(m[i]);
        v[i] = round_to_float(v[i]);
      }
    }
  }
}

}  // namespace mambair
