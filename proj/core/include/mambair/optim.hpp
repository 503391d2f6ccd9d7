#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mambair/model.hpp"

namespace mambair {

struct AdamHyper {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments per parameter name, plus the step counter.
struct AdamState {
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
  std::size_t step = 0;
};

/// Rounds a double to the nearest float, returned as double.
inline double round_to_float(double v) { return static_cast<double>(static_cast<float>(v)); }

/// One bias-corrected Adam update of every parameter in `params` using the
/// matching entry of `grads` (same names, same sizes).
///
/// With `float_grid` set, parameters and moments are rounded to float after
/// the update, which makes a float checkpoint an exact snapshot of training.
void adam_step(ModelState& params, const std::map<std::string, std::vector<double>>& grads,
               AdamState& state, const AdamHyper& hyper, bool float_grid = false);

}  // namespace mambair
