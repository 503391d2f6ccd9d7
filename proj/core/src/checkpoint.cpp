#include "mambair/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out_.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }

  void entry(const std::string& name, const Shape& shape, std::span<const double> values) {
    if (name.size() > 0xffff) throw IoError("checkpoint: parameter name too long");
    if (shape.size() > 0xff) throw IoError("checkpoint: rank too large");
    u16(static_cast<std::uint16_t>(name.size()));
    bytes(name);
    u8(static_cast<std::uint8_t>(shape.size()));
    for (auto d : shape) u32(static_cast<std::uint32_t>(d));
    for (double v : values) f32(static_cast<float>(v));
  }

  std::vector<unsigned char> take() { return std::move(out_); }

 private:
  std::vector<unsigned char> out_;
};

class Reader {
 public:
  explicit Reader(const std::vector<unsigned char>& b) : b_(b) {}

  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint16_t u16() {
    need(2);
    std::uint16_t v = static_cast<std::uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(b_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  b_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }

  std::pair<std::string, Tensor> entry() {
    std::string name = str(u16());
    const std::size_t rank = u8();
    Shape shape(rank);
    for (auto& d : shape) d = u32();
    const std::size_t n = shape_numel(shape);
    need(n * 4);
    std::vector<double> values(n);
    for (auto& v : values) v = static_cast<double>(f32());
    return {std::move(name), Tensor(std::move(shape), std::move(values))};
  }

  bool done() const { return pos_ == b_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) throw IoError("checkpoint: truncated data");
  }

  const std::vector<unsigned char>& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<unsigned char> encode_checkpoint(const ModelState& params, const AdamState& optimizer) {
  Writer w;
  w.bytes("MIRC");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) w.entry(name, t.shape(), t.data());

  std::uint32_t count = 1;
  for (const auto& [name, t] : params) {
    if (optimizer.m.count(name)) ++count;
    if (optimizer.v.count(name)) ++count;
  }
  w.u32(count);
  for (const auto& [name, t] : params) {
    if (auto it = optimizer.m.find(name); it != optimizer.m.end()) w.entry("m/" + name, t.shape(), it->second);
  }
  for (const auto& [name, t] : params) {
    if (auto it = optimizer.v.find(name); it != optimizer.v.end()) w.entry("v/" + name, t.shape(), it->second);
  }
  const double step = static_cast<double>(optimizer.step);
  w.entry("step", {}, std::span<const double>(&step, 1));
  return w.take();
}

Checkpoint decode_checkpoint(const std::vector<unsigned char>& bytes) {
  Reader r(bytes);
  if (r.str(4) != "MIRC") throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::uint32_t nparams = r.u32();
  for (std::uint32_t i = 0; i < nparams; ++i) {
    auto [name, t] = r.entry();
    ck.params.add(name, std::move(t));
  }
  const std::uint32_t nopt = r.u32();
  for (std::uint32_t i = 0; i < nopt; ++i) {
    auto [name, t] = r.entry();
    std::vector<double> values(t.data().begin(), t.data().end());
    if (name == "step") {
      if (values.size() != 1) throw IoError("checkpoint: step must be a scalar");
      ck.optimizer.step = static_cast<std::size_t>(values[0]);
    } else if (name.rfind("m/", 0) == 0) {
      ck.optimizer.m[name.substr(2)] = std::move(values);
    } else if (name.rfind("v/", 0) == 0) {
      ck.optimizer.v[name.substr(2)] = std::move(values);
    } else {
      throw IoError("checkpoint: unknown optimizer entry " + name);
    }
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return ck;
}

void save_checkpoint(const std::string& path, const ModelState& params, const AdamState& optimizer) {
  const auto bytes = encode_checkpoint(params, optimizer);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const IoError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void assign_parameters(ModelState& target, const ModelState& source) {
  if (target.size() != source.size()) {
    throw ConfigError("checkpoint has " + std::to_string(source.size()) + " parameters, model has " +
                      std::to_string(target.size()));
  }
  for (auto& [name, t] : target) {
    if (!source.contains(name)) throw ConfigError("checkpoint lacks parameter " + name);
    const Tensor& s = source.at(name);
    if (s.shape() != t.shape()) {
      throw ConfigError("checkpoint parameter " + name + " has shape " + shape_str(s.shape()) +
                        ", model expects " + shape_str(t.shape()));
    }
    std::copy(s.data().begin(), s.data().end(), t.data_mut().begin());
  }
}

}  // namespace mambair
