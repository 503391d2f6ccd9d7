#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "mambair/rng.hpp"
#include "mambair/tensor.hpp"

namespace testing_util {

inline mambair::Tensor random_tensor(mambair::Rng& rng, mambair::Shape shape, double lo = -1.0,
                                     double hi = 1.0) {
  mambair::Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Worst relative error over every entry of `params`, against a five-point
// central difference.
inline double full_grad_error(const std::function<mambair::Tensor()>& loss,
                              std::vector<mambair::Tensor> params, double step = 1e-3,
                              double floor = 1e-6) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    mambair::Tape tape;
    mambair::TapeScope scope(tape);
    tape.backward(loss());
  }
  double worst = 0.0;
  for (auto& p : params) {
    for (std::size_t k = 0; k < p.numel(); ++k) {
      const double analytic = p.has_grad() ? p.grad()[k] : 0.0;
      const double orig = p[k];
      auto at = [&](double offset) {
        p.data_mut()[k] = orig + offset;
        return loss().item();
      };
      const double numeric = (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step);
      p.data_mut()[k] = orig;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace testing_util
