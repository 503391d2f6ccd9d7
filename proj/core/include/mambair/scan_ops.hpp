#pragma once

#include "mambair/tensor.hpp"

namespace mambair {

enum class ScanMode { kSequential, kParallel };

/// Differentiable selective scan with the first-order input rule.
///
/// x, delta: [L,D]; a_log: [D,N]; b, c: [L,N]; d: [D]. Returns y [L,D] with
///   h_k = exp(delta_k * A) h_{k-1} + delta_k * B_k * x_k,  A = -exp(a_log)
///   y_k = C_k . h_k + D * x_k
/// The adjoint runs the recurrence backwards over the stored hidden states.
Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a_log, const Tensor& b,
                      const Tensor& c, const Tensor& d, ScanMode mode = ScanMode::kSequential);

}  // namespace mambair
