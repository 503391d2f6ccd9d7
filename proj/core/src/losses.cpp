#include "mambair/losses.hpp"

#include <cmath>
#include <stdexcept>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

void check_pair(const Tensor& pred, const Tensor& target, const char* op) {
  if (pred.shape() != target.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  if (pred.numel() == 0) throw ShapeError(std::string(op) + ": empty input");
}

// Shared wiring for elementwise-then-mean losses. `deriv` gives
// d(term)/d(pred) for a difference value.
template <class Term, class Deriv>
Tensor mean_loss(const Tensor& pred, const Tensor& target, Term term, Deriv deriv) {
  const auto p = pred.data(), t = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) acc += term(p[i] - t[i]);
  const double inv = 1.0 / static_cast<double>(p.size());
  Tensor out = Tensor::scalar(acc * inv);
  if (Tape* tape = recording_tape({&pred, &target})) {
    tape->record(out, [pn = pred.node(), tn = target.node(), inv, deriv](std::span<const double> g) {
      const auto& pv = pn->value;
      const auto& tv = tn->value;
      double* gp = pn->requires_grad ? pn->ensure_grad().data() : nullptr;
      double* gt = tn->requires_grad ? tn->ensure_grad().data() : nullptr;
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double d = g[0] * inv * deriv(pv[i] - tv[i]);
        if (gp) gp[i] += d;
        if (gt) gt[i] -= d;
      }
    });
  }
  return out;
}

}  // namespace

Tensor loss_l1(const Tensor& pred, const Tensor& target) {
  check_pair(pred, target, "loss_l1");
  return mean_loss(
      pred, target, [](double d) { return std::abs(d); },
      [](double d) { return d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0); });
}

Tensor loss_charbonnier(const Tensor& pred, const Tensor& target, double eps) {
  check_pair(pred, target, "loss_charbonnier");
  if (!(eps > 0)) throw std::invalid_argument("loss_charbonnier: eps must be positive");
  const double e2 = eps * eps;
  return mean_loss(
      pred, target, [e2](double d) { return std::sqrt(d * d + e2); },
      [e2](double d) { return d / std::sqrt(d * d + e2); });
}

}  // namespace mambair
