#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mambair/model.hpp"
#include "mambair/tensor.hpp"

namespace mambair::diag {

/// A differentiable image-to-image map, e.g. a bound model forward.
using ModelFn = std::function<Tensor(const Tensor&)>;

ModelFn bind_model(const ModelState& params, const ModelConfig& config);

enum class ErfMode { kGray, kAveraged };
ErfMode parse_erf_mode(const std::string& name);

struct ErfMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> raw;         // |d center / d input| summed over input channels
  std::vector<double> normalized;  // raw / max(raw)
};

/// Gradient of the center output pixel (summed over output channels) with
/// respect to an input of side `size`. Gray mode uses a constant 0.5 input;
/// averaged mode averages the magnitudes over 8 seeded uniform inputs.
ErfMap compute_erf(const ModelFn& model, std::size_t size, std::size_t channels, ErfMode mode,
                   std::uint64_t seed = 0);

/// Heatmap with gamma 0.5, dark meaning large, to match the usual ERF plots.
void write_erf_pgm(const std::string& path, const ErfMap& erf);
std::string erf_csv(const ErfMap& erf);

inline constexpr double kNearZeroFraction = 1e-3;

struct ChannelStats {
  std::vector<double> activation;  // GAP(ReLU(x)) per channel
  double max = 0.0;
  double near_zero_fraction = 0.0;  // channels below kNearZeroFraction * max
};

/// Stats of one [H,W,C] feature map.
ChannelStats channel_stats(const Tensor& feature);

/// Stats of the last block's mixer output, averaged over `inputs`.
ChannelStats channel_activation_stats(const ModelState& params, const ModelConfig& config,
                                      const std::vector<Tensor>& inputs);
std::string channel_csv(const ChannelStats& stats);

struct BenchRecord {
  std::size_t side = 0;
  std::size_t pixels = 0;
  std::string variant;
  double ms_median = 0.0;
  std::size_t bytes = 0;  // peak live tensor bytes during one run
};

using Workload = std::function<void(std::size_t side)>;

/// One warm-up pass, then `runs` rounds over all sides; reports the median
/// time per side.
std::vector<BenchRecord> bench_workload(const std::string& variant, const Workload& work,
                                        const std::vector<std::size_t>& sides, std::size_t runs);

/// Least-squares slope of log(ms) against log(pixels).
double loglog_slope(const std::vector<BenchRecord>& records);

struct BenchReport {
  std::vector<BenchRecord> records;  // sorted by pixels, then variant
  std::map<std::string, double> slopes;
};

/// The light model used for scaling runs: one group of one block at the
/// given channel width, with the chosen token mixer.
ModelConfig bench_model_config(Mixer mixer, std::size_t channels = 16);

/// Times a forward pass of each variant ("ssm", "full_attention") at each side.
BenchReport complexity_bench(const std::vector<std::size_t>& sides,
                             const std::vector<std::string>& variants, std::size_t runs,
                             std::uint64_t seed = 0, std::size_t channels = 16);

std::string bench_csv(const std::vector<BenchRecord>& records);

/// Reference workloads with known cost, used to check the slope fit.
Workload linear_calibration();
Workload quadratic_calibration();

}  // namespace mambair::diag
