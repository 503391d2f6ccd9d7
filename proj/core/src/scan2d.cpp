#include "mambair/scan2d.hpp"

#include <cmath>
#include <string>

#include "mambair/errors.hpp"
#include "mambair/ops.hpp"

namespace mambair::scan2d {

std::vector<std::size_t> scan_order(Direction dir, std::size_t height, std::size_t width) {
  const std::size_t n = height * width;
  std::vector<std::size_t> order(n);
  const bool column = dir == Direction::kColumnForward || dir == Direction::kColumnReverse;
  for (std::size_t p = 0; p < n; ++p) {
    if (column) {
      const std::size_t w = p / height, h = p % height;
      order[p] = h * width + w;
    } else {
      order[p] = p;
    }
  }
  if (dir == Direction::kRowReverse || dir == Direction::kColumnReverse) {
    std::vector<std::size_t> rev(order.rbegin(), order.rend());
    order.swap(rev);
  }
  return order;
}

std::vector<std::size_t> invert_permutation(std::span<const std::size_t> perm) {
  std::vector<std::size_t> inv(perm.size(), perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || inv[perm[i]] != perm.size()) {
      throw std::invalid_argument("invert_permutation: not a bijection");
    }
    inv[perm[i]] = i;
  }
  return inv;
}

std::vector<Direction> active_directions(std::size_t count) {
  switch (count) {
    case 1:
      return {Direction::kRowForward};
    case 2:
      return {Direction::kRowForward, Direction::kRowReverse};
    case 4:
      return {Direction::kRowForward, Direction::kColumnForward, Direction::kRowReverse,
              Direction::kColumnReverse};
    default:
      throw std::invalid_argument("scan direction count must be 1, 2 or 4, got " +
                                  std::to_string(count));
  }
}

DirectionalSequences flatten_directions(const Tensor& feature) {
  if (feature.rank() != 3 || feature.dim(0) == 0 || feature.dim(1) == 0) {
    throw ShapeError("flatten_directions: expected non-empty [H,W,C], got " +
                     shape_str(feature.shape()));
  }
  DirectionalSequences out;
  out.height = feature.dim(0);
  out.width = feature.dim(1);
  const std::size_t c = feature.dim(2);
  const Tensor tokens = reshape(feature, {out.height * out.width, c});
  for (std::size_t d = 0; d < kNumDirections; ++d) {
    out.order[d] = scan_order(static_cast<Direction>(d), out.height, out.width);
    out.inverse[d] = invert_permutation(out.order[d]);
    out.sequences[d] = gather_rows(tokens, out.order[d]);
  }
  return out;
}

Tensor merge_directions(const std::array<Tensor, kNumDirections>& outputs,
                        const DirectionalSequences& seqs, std::size_t channels) {
  const std::size_t n = seqs.height * seqs.width;
  Tensor merged;
  for (std::size_t d = 0; d < kNumDirections; ++d) {
    if (!outputs[d].defined()) continue;
    if (outputs[d].shape() != Shape{n, channels}) {
      throw ShapeError("merge_directions: output " + std::to_string(d) + " has shape " +
                       shape_str(outputs[d].shape()) + ", expected [" + std::to_string(n) + "," +
                       std::to_string(channels) + "]");
    }
    Tensor restored = gather_rows(outputs[d], seqs.inverse[d]);
    merged = merged.defined() ? add(merged, restored) : restored;
  }
  if (!merged.defined()) throw std::invalid_argument("merge_directions: no outputs");
  return reshape(merged, {seqs.height, seqs.width, channels});
}

DirectionParams init_direction_params(std::size_t channels, std::size_t state, Rng& rng) {
  DirectionParams p;
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  auto uniform = [&](Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data_mut()) v = rng.uniform(-bound, bound);
    return t;
  };
  p.w_delta = uniform({channels, channels});
  p.b_delta = Tensor({channels});
  for (auto& v : p.b_delta.data_mut()) {
    const double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    v = softplus_inverse(dt);
  }
  p.w_b = uniform({channels, state});
  p.w_c = uniform({channels, state});
  p.a_log = Tensor({channels, state});
  auto al = p.a_log.data_mut();
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t n = 0; n < state; ++n) al[ch * state + n] = std::log(static_cast<double>(n + 1));
  p.d = Tensor::ones({channels});
  return p;
}

Tensor scan_sequence(const Tensor& seq, const DirectionParams& p, ScanMode mode) {
  const Tensor delta = softplus(linear(seq, p.w_delta, p.b_delta));
  const Tensor b = linear(seq, p.w_b);
  const Tensor c = linear(seq, p.w_c);
  return selective_scan(seq, delta, p.a_log, b, c, p.d, mode);
}

Tensor ssm2d_forward(const Tensor& feature, std::span<const DirectionParams> params,
                     std::size_t directions, ScanMode mode) {
  const std::vector<Direction> dirs = active_directions(directions);
  if (params.size() != 1 && params.size() != dirs.size()) {
    throw std::invalid_argument("ssm2d_forward: need 1 shared or " + std::to_string(dirs.size()) +
                                " parameter sets, got " + std::to_string(params.size()));
  }
  const DirectionalSequences seqs = flatten_directions(feature);
  std::array<Tensor, kNumDirections> outputs;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    const auto d = static_cast<std::size_t>(dirs[i]);
    const DirectionParams& p = params.size() == 1 ? params[0] : params[i];
    outputs[d] = scan_sequence(seqs.sequences[d], p, mode);
  }
  return merge_directions(outputs, seqs, feature.dim(2));
}

}  // namespace mambair::scan2d
