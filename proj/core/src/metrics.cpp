#include "mambair/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mambair/errors.hpp"

namespace mambair {

Tensor rgb_to_y(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw ShapeError("rgb_to_y: expected [H,W,1] or [H,W,3], got " + shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor y({h, w});
  auto src = image.data();
  auto dst = y.data_mut();
  for (std::size_t p = 0; p < h * w; ++p) {
    if (c == 1) {
      dst[p] = src[p] * 255.0;
    } else {
      dst[p] = 16.0 + 65.481 * src[p * 3] + 128.553 * src[p * 3 + 1] + 24.966 * src[p * 3 + 2];
    }
  }
  return y;
}

double psnr_from_mse(double mse_255) {
  if (mse_255 == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(255.0) - 10.0 * std::log10(mse_255);
}

double psnr_y(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("psnr_y: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor ya = rgb_to_y(a), yb = rgb_to_y(b);
  double acc = 0.0;
  for (std::size_t i = 0; i < ya.numel(); ++i) {
    const double d = ya[i] - yb[i];
    acc += d * d;
  }
  return psnr_from_mse(acc / static_cast<double>(ya.numel()));
}

namespace {

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> g(size);
  const double c = static_cast<double>(size / 2);
  double total = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += g[i];
  }
  for (auto& v : g) v /= total;
  return g;
}

// Valid-region separable filtering of an [H,W] plane.
std::vector<double> filter_valid(const std::vector<double>& src, std::size_t h, std::size_t w,
                                 const std::vector<double>& win) {
  const std::size_t k = win.size();
  const std::size_t oh = h - k + 1, ow = w - k + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += win[t] * src[i * w + j + t];
      rows[i * ow + j] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += win[t] * rows[(i + t) * ow + j];
      out[i * ow + j] = acc;
    }
  return out;
}

}  // namespace

double ssim_y(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("ssim_y: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor ya = rgb_to_y(a), yb = rgb_to_y(b);
  const std::size_t h = ya.dim(0), w = ya.dim(1);
  std::size_t k = std::min<std::size_t>({11, h, w});
  if (k % 2 == 0) --k;
  const std::vector<double> win = gaussian_window(k, 1.5);

  const std::vector<double> x(ya.data().begin(), ya.data().end());
  const std::vector<double> y(yb.data().begin(), yb.data().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, win), my = filter_valid(y, h, w, win);
  const auto sxx = filter_valid(xx, h, w, win), syy = filter_valid(yy, h, w, win);
  const auto sxy = filter_valid(xy, h, w, win);
  const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double acc = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

}  // namespace mambair
