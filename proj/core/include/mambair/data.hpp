#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "mambair/model.hpp"
#include "mambair/ops.hpp"
#include "mambair/rng.hpp"
#include "mambair/tensor.hpp"

namespace mambair {

/// The eight dihedral transforms of a square image. Code bit 2 selects a
/// horizontal flip, applied first; bits 0-1 give the number of clockwise
/// quarter turns applied after it.
inline constexpr int kNumDihedral = 8;

Tensor augment(const Tensor& image, int code);
int inverse_code(int code);
/// Code of "apply `first`, then `second`".
int compose_codes(int first, int second);

Tensor crop(const Tensor& image, std::size_t y, std::size_t x, std::size_t h, std::size_t w);

/// Mean over non-overlapping scale x scale cells. H and W must divide.
Tensor downsample_area(const Tensor& image, std::size_t scale);

Tensor add_gaussian_noise(const Tensor& image, double sigma, Rng& rng);

/// Low-quality counterpart of a ground-truth image for the task.
Tensor degrade(const Tensor& hq, Task task, double sigma, Rng& rng);

/// Seeded images made of smooth color gradients with random rectangles on top.
std::vector<Tensor> synthetic_corpus(std::size_t count, std::size_t size, std::size_t channels,
                                     std::uint64_t seed);

}  // namespace mambair
