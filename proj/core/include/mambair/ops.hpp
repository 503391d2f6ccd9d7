#pragma once

#include <cstddef>
#include <span>

#include "mambair/tensor.hpp"

// Differentiable primitives. Feature maps are channel-last: [H, W, C].
// Every function records itself on the active tape when one of its inputs
// requires a gradient, and is a plain computation otherwise.
namespace mambair {

inline constexpr double kLayerNormEps = 1e-6;

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double k);

/// x[..., C] * s[C], broadcasting s over all leading axes.
Tensor mul_channel(const Tensor& x, const Tensor& s);
/// x[..., C] + b[C].
Tensor add_channel(const Tensor& x, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

/// x[..., Cin] @ w[Cin, Cout] (+ bias[Cout] if defined).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias = Tensor{});

/// Zero-padded cross-correlation. weight is [k, k, Cin, Cout].
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding);
/// Same-padded per-channel convolution. weight is [k, k, C].
Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias);

/// Normalizes over the last axis: (x - mean) / sqrt(var + eps) * gamma + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = kLayerNormEps);

Tensor sigmoid(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor gelu(const Tensor& x);
Tensor softplus(const Tensor& x);

/// [H, W, C] -> [C]
Tensor global_avg_pool(const Tensor& x);

/// Depth-to-space: [H, W, r*r*C] -> [r*H, r*W, C]. Input channel
/// c*r*r + i*r + j lands at output (h*r + i, w*r + j, c).
Tensor pixel_shuffle(const Tensor& x, std::size_t r);
/// Space-to-depth, the inverse of pixel_shuffle.
Tensor pixel_unshuffle(const Tensor& x, std::size_t r);

/// Bilinear upsampling of [H, W, C] by an integer factor, sampling at pixel
/// centers with edge clamping.
Tensor upsample_bilinear(const Tensor& x, std::size_t scale);

/// x[L, C] -> out[i, :] = x[index[i], :]. index may repeat entries.
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

// Scalar helpers shared with the non-differentiable kernels.
double sigmoid_value(double x);
double softplus_value(double x);
double softplus_inverse(double y);

}  // namespace mambair
