#include "mambair/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

void check_code(int code) {
  if (code < 0 || code >= kNumDihedral) {
    throw std::invalid_argument("augmentation code must be in [0,8), got " + std::to_string(code));
  }
}

void require_image(const Tensor& t, const char* op) {
  if (t.rank() != 3) throw ShapeError(std::string(op) + ": expected [H,W,C]");
}

}  // namespace

Tensor augment(const Tensor& image, int code) {
  check_code(code);
  require_image(image, "augment");
  const bool flip = (code & 4) != 0;
  const int turns = code & 3;
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  if (turns % 2 == 1 && h != w) {
    throw ShapeError("augment: quarter turns need a square image, got " + shape_str(image.shape()));
  }
  const auto src = image.data();
  Tensor out({h, w, c});
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      // Pull back output (i, j) through the rotation, then the flip.
      std::size_t si = i, sj = j;
      switch (turns) {
        case 1: si = h - 1 - j; sj = i; break;
        case 2: si = h - 1 - i; sj = w - 1 - j; break;
        case 3: si = j; sj = w - 1 - i; break;
        default: break;
      }
      if (flip) sj = w - 1 - sj;
      for (std::size_t ch = 0; ch < c; ++ch) dst[(i * w + j) * c + ch] = src[(si * w + sj) * c + ch];
    }
  }
  return out;
}

int inverse_code(int code) {
  check_code(code);
  if (code & 4) return code;  // reflections are involutions
  return (4 - code) & 3;
}

int compose_codes(int first, int second) {
  check_code(first);
  check_code(second);
  // R^k2 F^f2 R^k1 F^f1 = R^(k2 +- k1) F^(f1 xor f2), since F R^k = R^-k F.
  const int f1 = first >> 2, k1 = first & 3;
  const int f2 = second >> 2, k2 = second & 3;
  const int k = (k2 + (f2 ? 4 - k1 : k1)) & 3;
  return ((f1 ^ f2) << 2) | k;
}

Tensor crop(const Tensor& image, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
  require_image(image, "crop");
  if (y + h > image.dim(0) || x + w > image.dim(1)) throw ShapeError("crop: window out of bounds");
  const std::size_t iw = image.dim(1), c = image.dim(2);
  Tensor out({h, w, c});
  auto src = image.data();
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < h; ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(((y + i) * iw + x) * c), w * c,
                dst.begin() + static_cast<std::ptrdiff_t>(i * w * c));
  return out;
}

Tensor downsample_area(const Tensor& image, std::size_t scale) {
  require_image(image, "downsample_area");
  if (scale == 0 || image.dim(0) % scale || image.dim(1) % scale) {
    throw ShapeError("downsample_area: " + shape_str(image.shape()) + " not divisible by " +
                     std::to_string(scale));
  }
  const std::size_t h = image.dim(0) / scale, w = image.dim(1) / scale, c = image.dim(2);
  const std::size_t iw = image.dim(1);
  Tensor out({h, w, c});
  auto src = image.data();
  auto dst = out.data_mut();
  const double inv = 1.0 / static_cast<double>(scale * scale);
  for (std::size_t i = 0; i < h; ++i)
    for (std::size_t j = 0; j < w; ++j)
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t a = 0; a < scale; ++a)
          for (std::size_t b = 0; b < scale; ++b)
            acc += src[((i * scale + a) * iw + (j * scale + b)) * c + ch];
        dst[(i * w + j) * c + ch] = acc * inv;
      }
  return out;
}

Tensor add_gaussian_noise(const Tensor& image, double sigma, Rng& rng) {
  Tensor out = image.clone();
  if (sigma == 0.0) return out;
  for (auto& v : out.data_mut()) v += sigma * rng.normal();
  return out;
}

Tensor degrade(const Tensor& hq, Task task, double sigma, Rng& rng) {
  switch (task) {
    case Task::kDenoise: return add_gaussian_noise(hq, sigma, rng);
    case Task::kSr2: return downsample_area(hq, 2);
    case Task::kSr3: return downsample_area(hq, 3);
    case Task::kSr4: return downsample_area(hq, 4);
  }
  throw std::logic_error("unknown task");
}

std::vector<Tensor> synthetic_corpus(std::size_t count, std::size_t size, std::size_t channels,
                                     std::uint64_t seed) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t n = 0; n < count; ++n) {
    Rng rng(derive_seed(seed, n, 0x5c0));
    Tensor img({size, size, channels});
    auto px = img.data_mut();
    const double s = static_cast<double>(size);
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const double base = rng.uniform(0.2, 0.8);
      const double gx = rng.uniform(-0.4, 0.4), gy = rng.uniform(-0.4, 0.4);
      const double amp = rng.uniform(0.0, 0.15), freq = rng.uniform(0.5, 2.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t i = 0; i < size; ++i)
        for (std::size_t j = 0; j < size; ++j) {
          const double u = static_cast<double>(j) / s - 0.5, v = static_cast<double>(i) / s - 0.5;
          px[(i * size + j) * channels + ch] =
              base + gx * u + gy * v +
              amp * std::sin(2.0 * std::numbers::pi * freq * (u + v) + phase);
        }
    }
    const std::size_t rects = 2 + rng.below(3);
    for (std::size_t r = 0; r < rects; ++r) {
      const std::size_t rh = 3 + rng.below(size / 2), rw = 3 + rng.below(size / 2);
      const std::size_t y0 = rng.below(size - std::min(rh, size - 1));
      const std::size_t x0 = rng.below(size - std::min(rw, size - 1));
      std::vector<double> color(channels);
      for (auto& v : color) v = rng.uniform(0.0, 1.0);
      for (std::size_t i = y0; i < std::min(size, y0 + rh); ++i)
        for (std::size_t j = x0; j < std::min(size, x0 + rw); ++j)
          for (std::size_t ch = 0; ch < channels; ++ch) px[(i * size + j) * channels + ch] = color[ch];
    }
    for (auto& v : px) v = std::clamp(v, 0.0, 1.0);
    out.push_back(std::move(img));
  }
  return out;
}

}  // namespace mambair
