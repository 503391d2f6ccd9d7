#pragma once

#include <cstddef>

#include "mambair/rng.hpp"
#include "mambair/tensor.hpp"

namespace mambair {

/// softmax(Q K^T / sqrt(C)) V over all L tokens. q, k, v are [L,C].
///
/// Rows are processed one at a time, so memory stays O(L C) while time is
/// O(L^2 C). The adjoint recomputes each row of probabilities.
Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v);

/// Row i of the attention matrix for the given projections (for tests).
std::vector<double> attention_row(const Tensor& q, const Tensor& k, std::size_t row);

struct AttentionWeights {
  Tensor wq, bq;
  Tensor wk, bk;
  Tensor wv, bv;
  Tensor wo, bo;
};

AttentionWeights init_attention_weights(std::size_t channels, Rng& rng);

/// Single-head global self-attention over the H*W tokens of [H,W,C].
Tensor full_attention_forward(const Tensor& x, const AttentionWeights& w);

}  // namespace mambair
