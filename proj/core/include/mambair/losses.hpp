#pragma once

#include "mambair/tensor.hpp"

namespace mambair {

inline constexpr double kCharbonnierEps = 1e-3;

/// mean |pred - target|. The subgradient at ties is 0.
Tensor loss_l1(const Tensor& pred, const Tensor& target);

/// mean sqrt((pred - target)^2 + eps^2), applied per element.
Tensor loss_charbonnier(const Tensor& pred, const Tensor& target, double eps = kCharbonnierEps);

}  // namespace mambair
