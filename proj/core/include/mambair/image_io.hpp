#pragma once

#include <string>
#include <vector>

#include "mambair/tensor.hpp"

namespace mambair {

/// Reads an 8-bit binary PGM (P5) or PPM (P6) into [H,W,1] or [H,W,3] with
/// values in [0,1]. Header comments starting with '#' are skipped.
Tensor image_read(const std::string& path);
Tensor image_decode(const std::vector<unsigned char>& bytes);

/// Writes P5 for one channel, P6 for three. Values are clamped to [0,1] and
/// quantized by round(v * 255).
void image_write(const std::string& path, const Tensor& image);
std::vector<unsigned char> image_encode(const Tensor& image);

/// Every *.pgm / *.ppm under `dir`, sorted by file name.
std::vector<std::string> list_images(const std::string& dir);

}  // namespace mambair
