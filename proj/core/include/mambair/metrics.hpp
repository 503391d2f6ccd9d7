#pragma once

#include "mambair/tensor.hpp"

namespace mambair {

/// Luma on the 0..255 scale: 16 + 65.481 R + 128.553 G + 24.966 B for RGB in
/// [0,1]. Single-channel images are taken as luma directly (v * 255).
/// Returns [H,W].
Tensor rgb_to_y(const Tensor& image);

/// 20 log10(255) - 10 log10(MSE) over the 0..255 scale.
double psnr_from_mse(double mse_255);

/// PSNR on the Y channel. Identical inputs return +infinity.
double psnr_y(const Tensor& a, const Tensor& b);

/// SSIM on the Y channel with an 11x11 Gaussian window (sigma 1.5) over the
/// valid region and the usual constants (0.01*255)^2, (0.03*255)^2. Images
/// smaller than the window use the largest odd window that fits.
double ssim_y(const Tensor& a, const Tensor& b);

}  // namespace mambair
