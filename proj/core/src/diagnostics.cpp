#include "mambair/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "mambair/errors.hpp"
#include "mambair/image_io.hpp"
#include "mambair/ops.hpp"
#include "mambair/rng.hpp"

namespace mambair::diag {

ModelFn bind_model(const ModelState& params, const ModelConfig& config) {
  return [&params, config](const Tensor& x) { return mambair_forward(x, params, config); };
}

ErfMode parse_erf_mode(const std::string& name) {
  if (name == "gray") return ErfMode::kGray;
  if (name == "averaged") return ErfMode::kAveraged;
  throw ConfigError("unknown erf mode '" + name + "' (expected gray or averaged)");
}

namespace {

std::vector<double> erf_magnitude(const ModelFn& model, const Tensor& input) {
  Tensor x = input.clone();
  x.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    const Tensor out = model(x);
    if (out.rank() != 3) throw ShapeError("compute_erf: model output must be [H,W,C]");
    Tensor mask(out.shape());
    const std::size_t oh = out.dim(0), ow = out.dim(1), oc = out.dim(2);
    const std::size_t center = ((oh / 2) * ow + ow / 2) * oc;
    for (std::size_t c = 0; c < oc; ++c) mask.data_mut()[center + c] = 1.0;
    const Tensor target = sum(mul(out, mask));
    if (!recording_tape({&target})) throw ConfigError("compute_erf: model output is not differentiable");
    tape.backward(target);
  }
  tape.clear();
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  std::vector<double> mag(h * w, 0.0);
  if (!x.has_grad()) return mag;
  auto g = x.grad();
  for (std::size_t p = 0; p < h * w; ++p)
    for (std::size_t k = 0; k < c; ++k) mag[p] += std::abs(g[p * c + k]);
  return mag;
}

}  // namespace

ErfMap compute_erf(const ModelFn& model, std::size_t size, std::size_t channels, ErfMode mode,
                   std::uint64_t seed) {
  if (size == 0 || channels == 0) throw ShapeError("compute_erf: empty input");
  ErfMap erf;
  erf.height = erf.width = size;
  if (mode == ErfMode::kGray) {
    erf.raw = erf_magnitude(model, Tensor({size, size, channels}, 0.5));
  } else {
    constexpr int kSamples = 8;
    erf.raw.assign(size * size, 0.0);
    for (int s = 0; s < kSamples; ++s) {
      Rng rng(derive_seed(seed, 0xe2f, static_cast<std::uint64_t>(s)));
      Tensor input({size, size, channels});
      for (auto& v : input.data_mut()) v = rng.uniform();
      const auto mag = erf_magnitude(model, input);
      for (std::size_t i = 0; i < mag.size(); ++i) erf.raw[i] += mag[i] / kSamples;
    }
  }
  const double peak = *std::max_element(erf.raw.begin(), erf.raw.end());
  erf.normalized.resize(erf.raw.size());
  for (std::size_t i = 0; i < erf.raw.size(); ++i) {
    erf.normalized[i] = peak > 0.0 ? erf.raw[i] / peak : 0.0;
  }
  return erf;
}

void write_erf_pgm(const std::string& path, const ErfMap& erf) {
  Tensor img({erf.height, erf.width, 1});
  auto d = img.data_mut();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = 1.0 - std::sqrt(erf.normalized[i]);
  image_write(path, img);
}

std::string erf_csv(const ErfMap& erf) {
  std::ostringstream os;
  os << "row,col,raw,normalized\n";
  char buf[96];
  for (std::size_t i = 0; i < erf.height; ++i)
    for (std::size_t j = 0; j < erf.width; ++j) {
      const std::size_t p = i * erf.width + j;
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.10e,%.8f\n", i, j, erf.raw[p], erf.normalized[p]);
      os << buf;
    }
  return os.str();
}

ChannelStats channel_stats(const Tensor& feature) {
  if (feature.rank() != 3) throw ShapeError("channel_stats: expected [H,W,C], got " + shape_str(feature.shape()));
  const Tensor pooled = global_avg_pool(relu(feature));
  ChannelStats s;
  s.activation.assign(pooled.data().begin(), pooled.data().end());
  s.max = *std::max_element(s.activation.begin(), s.activation.end());
  std::size_t low = 0;
  for (double a : s.activation)
    if (s.max <= 0.0 || a < kNearZeroFraction * s.max) ++low;
  s.near_zero_fraction = static_cast<double>(low) / static_cast<double>(s.activation.size());
  return s;
}

ChannelStats channel_activation_stats(const ModelState& params, const ModelConfig& config,
                                      const std::vector<Tensor>& inputs) {
  if (config.mixer != Mixer::kSsm) throw ConfigError("channel statistics need a model with VSSM layers");
  if (inputs.empty()) throw ConfigError("channel statistics need at least one input");
  std::vector<double> acc;
  for (const auto& input : inputs) {
    ForwardTrace trace;
    mambair_forward(input, params, config, &trace);
    const ChannelStats one = channel_stats(trace.last_mixer_output);
    if (acc.empty()) acc.assign(one.activation.size(), 0.0);
    for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += one.activation[c];
  }
  for (auto& a : acc) a /= static_cast<double>(inputs.size());
  Tensor pooled({1, 1, acc.size()}, acc);
  return channel_stats(pooled);
}

std::string channel_csv(const ChannelStats& stats) {
  std::ostringstream os;
  os << "channel,activation\n";
  char buf[64];
  for (std::size_t c = 0; c < stats.activation.size(); ++c) {
    std::snprintf(buf, sizeof buf, "%zu,%.10e\n", c, stats.activation[c]);
    os << buf;
  }
  return os.str();
}

std::vector<BenchRecord> bench_workload(const std::string& variant, const Workload& work,
                                        const std::vector<std::size_t>& sides, std::size_t runs) {
  if (runs == 0) throw ConfigError("bench needs at least one timed run");
  for (std::size_t i = 1; i < sides.size(); ++i) {
    if (sides[i] <= sides[i - 1]) throw ConfigError("bench sizes must be strictly increasing");
  }
  // Rounds visit every size in turn, so slow stretches of machine time are
  // spread over all sizes instead of biasing one of them.
  for (std::size_t side : sides) work(side);  // warm-up
  std::vector<std::vector<double>> ms(sides.size());
  std::vector<std::size_t> peak(sides.size(), 0);
  for (std::size_t r = 0; r < runs; ++r) {
    for (std::size_t i = 0; i < sides.size(); ++i) {
      const std::size_t base = memory_stats().live_bytes;
      reset_peak_memory();
      const auto t0 = std::chrono::steady_clock::now();
      work(sides[i]);
      const auto t1 = std::chrono::steady_clock::now();
      ms[i].push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      peak[i] = std::max(peak[i], memory_stats().peak_bytes - std::min(base, memory_stats().peak_bytes));
    }
  }
  std::vector<BenchRecord> out;
  for (std::size_t i = 0; i < sides.size(); ++i) {
    auto& m = ms[i];
    std::sort(m.begin(), m.end());
    const double median = runs % 2 ? m[runs / 2] : 0.5 * (m[runs / 2 - 1] + m[runs / 2]);
    out.push_back({sides[i], sides[i] * sides[i], variant, median, peak[i]});
  }
  return out;
}

double loglog_slope(const std::vector<BenchRecord>& records) {
  if (records.size() < 2) throw ConfigError("slope fit needs at least two sizes");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(records.size());
  for (const auto& r : records) {
    const double x = std::log(static_cast<double>(r.pixels));
    const double y = std::log(std::max(r.ms_median, 1e-9));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

ModelConfig bench_model_config(Mixer mixer, std::size_t channels) {
  ModelConfig c;
  c.channels = channels;
  c.groups = 1;
  c.blocks_per_group = 1;
  c.task = Task::kDenoise;
  c.mixer = mixer;
  return c;
}

BenchReport complexity_bench(const std::vector<std::size_t>& sides,
                             const std::vector<std::string>& variants, std::size_t runs,
                             std::uint64_t seed, std::size_t channels) {
  BenchReport report;
  for (const auto& variant : variants) {
    Mixer mixer;
    if (variant == "ssm") {
      mixer = Mixer::kSsm;
    } else if (variant == "full_attention") {
      mixer = Mixer::kFullAttention;
    } else {
      throw ConfigError("unknown bench variant '" + variant + "' (expected ssm or full_attention)");
    }
    const ModelConfig config = bench_model_config(mixer, channels);
    const ModelState params = init_model(config, seed);
    Workload work = [&](std::size_t side) {
      Rng rng(derive_seed(seed, side));
      Tensor x({side, side, config.in_channels});
      for (auto& v : x.data_mut()) v = rng.uniform();
      mambair_forward(x, params, config);
    };
    auto recs = bench_workload(variant, work, sides, runs);
    report.slopes[variant] = loglog_slope(recs);
    report.records.insert(report.records.end(), recs.begin(), recs.end());
  }
  std::stable_sort(report.records.begin(), report.records.end(),
                   [](const BenchRecord& a, const BenchRecord& b) { return a.pixels < b.pixels; });
  return report;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::ostringstream os;
  os << "side,pixels,variant,ms_median,bytes\n";
  char buf[160];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%s,%.4f,%zu\n", r.side, r.pixels, r.variant.c_str(),
                  r.ms_median, r.bytes);
    os << buf;
  }
  return os.str();
}

namespace {

// Keeps the optimizer from discarding calibration loops.
volatile double g_sink = 0.0;

}  // namespace

Workload linear_calibration() {
  return [](std::size_t side) {
    const std::size_t n = side * side;
    double acc = 0.0;
    for (std::size_t rep = 0; rep < 4000; ++rep)
      for (std::size_t i = 0; i < n; ++i) acc += std::sqrt(static_cast<double>(i + rep));
    g_sink = acc;
  };
}

Workload quadratic_calibration() {
  return [](std::size_t side) {
    const std::size_t n = side * side;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; j += 2) acc += std::sqrt(static_cast<double>(i + j));
    g_sink = acc;
  };
}

}  // namespace mambair::diag
