#include "mambair/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

class HeaderReader {
 public:
  explicit HeaderReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}

  std::string token() {
    skip_space_and_comments();
    std::string out;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) out += static_cast<char>(bytes_[pos_++]);
    if (out.empty()) throw IoError("malformed image header: unexpected end of data");
    return out;
  }

  std::size_t number() {
    const std::string t = token();
    if (!std::all_of(t.begin(), t.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
      throw IoError("malformed image header: '" + t + "' is not a number");
    }
    return std::stoul(t);
  }

  // Exactly one whitespace byte separates maxval from the payload.
  std::size_t payload_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw IoError("malformed image header: missing separator before pixel data");
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

Tensor image_decode(const std::vector<unsigned char>& bytes) {
  HeaderReader hdr(bytes);
  const std::string magic = hdr.token();
  std::size_t channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw IoError("unsupported image format '" + magic + "' (need P5 or P6)");
  const std::size_t width = hdr.number();
  const std::size_t height = hdr.number();
  const std::size_t maxval = hdr.number();
  if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + " (need 255)");
  if (width == 0 || height == 0) throw IoError("image has zero extent");
  const std::size_t start = hdr.payload_start();
  const std::size_t need = width * height * channels;
  if (bytes.size() < start + need) {
    throw IoError("truncated image payload: " + std::to_string(bytes.size() - start) + " of " +
                  std::to_string(need) + " bytes");
  }
  Tensor img({height, width, channels});
  auto out = img.data_mut();
  for (std::size_t i = 0; i < need; ++i) out[i] = bytes[start + i] / 255.0;
  return img;
}

Tensor image_read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return image_decode(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

std::vector<unsigned char> image_encode(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw ShapeError("image_encode: expected [H,W,1] or [H,W,3], got " + shape_str(image.shape()));
  }
  const std::string header = std::string(image.dim(2) == 1 ? "P5" : "P6") + "\n" +
                             std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) +
                             "\n255\n";
  std::vector<unsigned char> out(header.begin(), header.end());
  out.reserve(out.size() + image.numel());
  for (double v : image.data()) {
    const double c = std::clamp(std::isnan(v) ? 0.0 : v, 0.0, 1.0);
    out.push_back(static_cast<unsigned char>(std::lround(c * 255.0)));
  }
  return out;
}

void image_write(const std::string& path, const Tensor& image) {
  const auto bytes = image_encode(image);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing image " + path);
}

std::vector<std::string> list_images(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
  std::vector<std::string> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto ext = entry.path().extension().string();
    if (ext == ".pgm" || ext == ".ppm") out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mambair
