// Release gate: one PASS/FAIL line per criterion, non-zero exit if any fails.
//
//   mambair_acceptance [--only 1,4,10] [--out DIR]
//
// The lines are also written to DIR/acceptance_report.txt.
//
// Criteria 6-9 train the toy network for 2000 steps each and dominate the
// runtime (roughly half an hour per run on one core).

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mambair/config.hpp"
#include "mambair/diagnostics.hpp"
#include "mambair/metrics.hpp"
#include "mambair/model.hpp"
#include "mambair/ops.hpp"
#include "mambair/scan2d.hpp"
#include "mambair/selftest.hpp"
#include "mambair/train.hpp"

namespace fs = std::filesystem;
using namespace mambair;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

// --- 1, 2: scan equivalences ----------------------------------------------

Outcome form_equivalence() {
  const auto r = selftest::check_form_equivalence(200, 11);
  return {r.passed && r.seconds < 10.0, r.detail + fmt(", %.2f s (limit 10 s)", r.seconds)};
}

Outcome scan_equivalence() {
  const auto r = selftest::check_scan_equivalence(200, 12);
  return {r.passed && r.seconds < 10.0, r.detail + fmt(", %.2f s (limit 10 s)", r.seconds)};
}

// --- 3: gradients ------------------------------------------------------------

constexpr std::size_t kGradSamples = 60;
constexpr double kGradTolerance = 1e-4;

Outcome gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig toy;
  Rng rng(13);

  // (a) one direction of the selective scan at the toy's inner width.
  const std::size_t inner = toy.inner_channels();
  const Tensor seq = random_tensor(rng, {20, inner});
  scan2d::DirectionParams dir = scan2d::init_direction_params(inner, toy.state_size, rng);
  const Tensor seq_weight = random_tensor(rng, {20, inner});
  double scan_err = 0.0;
  for (ScanMode mode : {ScanMode::kSequential, ScanMode::kParallel}) {
    auto loss = [&] { return sum(mul(scan2d::scan_sequence(seq, dir, mode), seq_weight)); };
    const auto g = selftest::grad_check(loss, {dir.w_delta, dir.b_delta, dir.w_b, dir.w_c, dir.a_log, dir.d},
                                        kGradSamples, 31);
    scan_err = std::max(scan_err, g.max_rel_error);
  }

  // (b) VSSM of the first toy block.
  ModelState state = init_model(toy, 14);
  const VssmWeights w = vssm_weights(state, block_prefix(0, 0), toy);
  const Tensor x = random_tensor(rng, {6, 6, toy.channels});
  const Tensor vssm_weight = random_tensor(rng, {6, 6, toy.channels});
  std::vector<Tensor> vssm_leaves{w.in_w, w.in_b, w.gate_w, w.gate_b, w.dw_w, w.dw_b, w.ln_g, w.ln_b, w.out_w, w.out_b};
  for (const auto& d : w.scan) vssm_leaves.insert(vssm_leaves.end(), {d.w_delta, d.b_delta, d.w_b, d.w_c, d.a_log, d.d});
  const auto vssm = selftest::grad_check([&] { return sum(mul(vssm_forward(x, w), vssm_weight)); }, vssm_leaves,
                                         kGradSamples, 32);

  // (c) the whole toy network.
  ModelState params = init_model(toy, 15);
  const Tensor image = random_tensor(rng, {6, 6, 3}, 0.0, 1.0);
  const Tensor image_weight = random_tensor(rng, {6, 6, 3});
  std::vector<Tensor> leaves;
  for (auto& [name, t] : params) leaves.push_back(t);
  const auto model = selftest::grad_check(
      [&] { return sum(mul(mambair_forward(image, params, toy), image_weight)); }, leaves, kGradSamples, 33);

  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = scan_err <= kGradTolerance && vssm.max_rel_error <= kGradTolerance &&
                  model.max_rel_error <= kGradTolerance && secs < 120.0;
  return {ok, fmt("max rel error scan %.2e, vssm %.2e, model %.2e", scan_err, vssm.max_rel_error,
                  model.max_rel_error) +
                  fmt(" (%.0f samples each, %.1f s, limit 120 s)", double(kGradSamples), secs)};
}

// --- 4: receptive fields -----------------------------------------------------

// Same width and layer count as the toy network with every token mixer
// removed: shallow conv, two 3x3 convs per block, a conv per group, a head conv.
struct ConvNet {
  std::size_t groups = 2, blocks = 2, channels = 16;
  std::vector<Tensor> w, b;

  explicit ConvNet(std::uint64_t seed) {
    Rng rng(seed);
    auto add = [&](std::size_t cin, std::size_t cout) {
      const double bound = 1.0 / std::sqrt(9.0 * static_cast<double>(cin));
      w.push_back(random_tensor(rng, {3, 3, cin, cout}, -bound, bound));
      b.push_back(random_tensor(rng, {cout}, -bound, bound));
    };
    add(3, channels);
    for (std::size_t g = 0; g < groups; ++g) {
      for (std::size_t k = 0; k < blocks; ++k) {
        add(channels, channels);
        add(channels, channels);
      }
      add(channels, channels);
    }
    add(channels, 3);
  }

  std::size_t reach() const { return w.size(); }

  Tensor operator()(const Tensor& input) const {
    std::size_t i = 0;
    auto conv = [&](const Tensor& x) {
      const Tensor y = conv2d(x, w[i], b[i], 1);
      ++i;
      return y;
    };
    Tensor f = conv(input);
    for (std::size_t g = 0; g < groups; ++g) {
      Tensor h = f;
      for (std::size_t k = 0; k < blocks; ++k) h = add(h, conv(gelu(conv(h))));
      f = add(f, conv(h));
    }
    return add(input, conv(f));
  }
};

Outcome receptive_fields() {
  const auto t0 = std::chrono::steady_clock::now();
  const ModelConfig toy;
  const auto erf = diag::compute_erf(diag::bind_model(init_model(toy, 0), toy), 16, 3, diag::ErfMode::kGray);
  std::size_t support = 0;
  for (double v : erf.raw) support += v > 1e-12;
  const double low = *std::min_element(erf.raw.begin(), erf.raw.end());

  const ConvNet net(16);
  const std::size_t side = 32, r = net.reach(), center = side / 2;
  const auto conv_erf = diag::compute_erf([&](const Tensor& x) { return net(x); }, side, 3, diag::ErfMode::kGray);
  std::size_t inside = 0, outside = 0;
  for (std::size_t y = 0; y < side; ++y) {
    for (std::size_t x = 0; x < side; ++x) {
      if (conv_erf.raw[y * side + x] <= 1e-12) continue;
      const bool in_box = y + r >= center && y <= center + r && x + r >= center && x <= center + r;
      (in_box ? inside : outside)++;
    }
  }
  const std::size_t box = (2 * r + 1) * (2 * r + 1);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = support == 256 && low > 1e-12 && outside == 0 && inside > 0 && secs < 60.0;
  return {ok, fmt("ssm support %.0f/256 (min %.2e); ", double(support), low) +
                  fmt("conv support %.0f inside the %.0f-pixel reach box, %.0f outside", double(inside), double(box),
                      double(outside)) +
                  fmt(" (%.1f s, limit 60 s)", secs)};
}

// --- 5: complexity scaling -----------------------------------------------------

Outcome complexity(const fs::path& out_dir) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::vector<std::size_t> sides{48, 60, 72, 84, 96};
  const auto report = diag::complexity_bench(sides, {"ssm", "full_attention"}, 5, 0, 16);
  const double lin = diag::loglog_slope(diag::bench_workload("linear", diag::linear_calibration(), sides, 9));
  const double quad = diag::loglog_slope(diag::bench_workload("quadratic", diag::quadratic_calibration(), sides, 9));
  std::ofstream(out_dir / "acceptance_bench.csv") << diag::bench_csv(report.records);
  const double ssm = report.slopes.at("ssm"), attn = report.slopes.at("full_attention");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool ok = ssm <= 1.3 && attn >= 1.7 && lin >= 0.9 && lin <= 1.1 && quad >= 1.8 && quad <= 2.2 &&
                  secs < 300.0;
  return {ok, fmt("slopes ssm %.3f (<= 1.3), attention %.3f (>= 1.7), ", ssm, attn) +
                  fmt("calibration linear %.3f [0.9,1.1], quadratic %.3f [1.8,2.2]", lin, quad) +
                  fmt(" (%.0f s, limit 300 s)", secs)};
}

// --- 6-9: training runs ----------------------------------------------------------

RunConfig toy_run(Task task) {
  RunConfig config;
  config.model.task = task;
  config.train.synthetic_images = 64;
  config.train.synthetic_size = 32;
  validate(config);
  return config;
}

struct Run {
  std::string label;
  RunConfig config;
  TrainResult result;
  double seconds = 0.0;
};

Run train_run(const std::string& label, const RunConfig& config) {
  const Dataset data = synthetic_dataset(config.train.synthetic_images, config.train.eval_images,
                                         config.train.synthetic_size, config.model.in_channels, config.train.seed);
  std::cout << "  training " << label << " (" << config.train.total_steps << " steps)" << std::endl;
  const auto t0 = std::chrono::steady_clock::now();
  Run run{label, config, train(config, data), 0.0};
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

class Runs {
 public:
  const Run& denoise() {
    if (!denoise_) denoise_ = train_run("denoise", toy_run(Task::kDenoise));
    return *denoise_;
  }
  const Run& sr() {
    if (!sr_) sr_ = train_run("sr x2", toy_run(Task::kSr2));
    return *sr_;
  }

 private:
  std::optional<Run> denoise_, sr_;
};

double gain(const Run& r) { return r.result.report.eval.psnr - r.result.report.eval.baseline_psnr; }

Outcome denoising(Runs& runs) {
  const Run& r = runs.denoise();
  const auto& e = r.result.report.eval;
  return {std::isfinite(e.psnr) && gain(r) >= 3.0,
          fmt("held-out Y-PSNR %.3f dB vs noisy %.3f dB, gain %.3f dB (>= 3)", e.psnr, e.baseline_psnr, gain(r)) +
              fmt(" (%.0f s)", r.seconds)};
}

Outcome super_resolution(Runs& runs) {
  const Run& r = runs.sr();
  const auto& e = r.result.report.eval;
  return {std::isfinite(e.psnr) && gain(r) >= 0.5,
          fmt("held-out Y-PSNR %.3f dB vs bilinear %.3f dB, gain %.3f dB (>= 0.5)", e.psnr, e.baseline_psnr,
              gain(r)) +
              fmt(" (%.0f s)", r.seconds)};
}

Outcome ablations(Runs& runs, const fs::path& out_dir) {
  struct Variant {
    std::string label;
    std::function<void(ModelConfig&)> apply;
  };
  const std::vector<Variant> variants{
      {"remove conv", [](ModelConfig& m) { m.use_local_conv = false; }},
      {"remove conv+ca", [](ModelConfig& m) { m.use_local_conv = false; m.use_channel_attention = false; }},
      {"replace with mlp", [](ModelConfig& m) { m.replace_with_mlp = true; }},
      {"scan directions 1", [](ModelConfig& m) { m.scan_directions = 1; }},
      {"scan directions 2", [](ModelConfig& m) { m.scan_directions = 2; }},
  };
  std::vector<Run> table;
  std::string failures;
  for (const auto& v : variants) {
    RunConfig config = toy_run(Task::kDenoise);
    v.apply(config.model);
    try {
      table.push_back(train_run(v.label, config));
    } catch (const std::exception& e) {
      failures += v.label + ": " + e.what() + "; ";
    }
  }
  Run full = runs.denoise();
  full.label = "full (4 directions)";
  table.insert(table.begin(), full);

  std::ostringstream csv, text;
  csv << "variant,parameters,final_loss,psnr,baseline_psnr,gain_db,seconds\n";
  char buf[256];
  std::snprintf(buf, sizeof buf, "  %-20s %10s %10s %9s %8s\n", "variant", "params", "loss", "psnr", "gain");
  text << buf;
  bool finite = true;
  for (const auto& r : table) {
    const auto& rep = r.result.report;
    const std::size_t count = r.result.params.parameter_count();
    finite = finite && std::isfinite(rep.eval.psnr) && std::isfinite(rep.final_loss);
    std::snprintf(buf, sizeof buf, "%s,%zu,%.8g,%.6f,%.6f,%.6f,%.1f\n", r.label.c_str(), count, rep.final_loss,
                  rep.eval.psnr, rep.eval.baseline_psnr, gain(r), r.seconds);
    csv << buf;
    std::snprintf(buf, sizeof buf, "  %-20s %10zu %10.5f %9.3f %+8.3f\n", r.label.c_str(), count, rep.final_loss,
                  rep.eval.psnr, gain(r));
    text << buf;
  }
  std::ofstream(out_dir / "acceptance_ablations.csv") << csv.str();
  std::cout << text.str();
  const bool ok = failures.empty() && finite && table.size() == variants.size() + 1;
  return {ok, failures.empty() ? fmt("%.0f variants trained, table in acceptance_ablations.csv", double(table.size()))
                               : "failed: " + failures};
}

Outcome ensemble(Runs& runs) {
  const Run& r = runs.denoise();
  const Dataset data = synthetic_dataset(r.config.train.synthetic_images, r.config.train.eval_images,
                                         r.config.train.synthetic_size, r.config.model.in_channels,
                                         r.config.train.seed);
  const double single = evaluate(r.result.params, r.config, data.eval, false).psnr;
  const double plus = evaluate(r.result.params, r.config, data.eval, true).psnr;
  return {plus >= single - 0.01, fmt("ensemble %.4f dB vs single %.4f dB (delta %+.4f, >= -0.01)", plus, single,
                                     plus - single)};
}

// --- 10: metrics -----------------------------------------------------------------

Outcome metric_sanity() {
  const double p = psnr_from_mse(1.0);
  Rng rng(17);
  const Tensor img = random_tensor(rng, {24, 24, 3}, 0.0, 1.0);
  const double s = ssim_y(img, img);
  const Tensor white({1, 1, 3}, 1.0);
  const double y = rgb_to_y(white)[0];
  const bool ok = std::abs(p - 48.1308) <= 1e-3 && std::abs(s - 1.0) <= 1e-12 && std::abs(y - 235.0) <= 1e-3;
  return {ok, fmt("psnr(mse 1) %.6f, ssim(x,x) %.15f, white Y %.6f", p, s, y)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::vector<int> only;
  std::string out = ".";
  app.add_option("--only", only, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 10));
  app.add_option("--out", out, "Directory for the bench and ablation CSVs");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(out);

  Runs runs;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"LTI recurrent vs convolutional", form_equivalence},
      {"selective scan parallel vs sequential", scan_equivalence},
      {"gradients vs finite differences", gradients},
      {"global receptive field", receptive_fields},
      {"complexity scaling", [&] { return complexity(out); }},
      {"toy denoising", [&] { return denoising(runs); }},
      {"toy x2 super-resolution", [&] { return super_resolution(runs); }},
      {"ablation runs", [&] { return ablations(runs, out); }},
      {"self-ensemble", [&] { return ensemble(runs); }},
      {"metric sanity", metric_sanity},
  };
  const std::set<int> selected(only.begin(), only.end());
  std::ofstream report(fs::path(out) / "acceptance_report.txt");
  std::size_t run = 0, passed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    ++run;
    passed += o.passed;
    const std::string line =
        std::string(o.passed ? "PASS " : "FAIL ") + std::to_string(id) + " " + criteria[i].first + ": " + o.detail;
    std::cout << line << std::endl;
    report << line << std::endl;
  }
  std::cout << passed << "/" << run << " criteria passed" << std::endl;
  report << passed << "/" << run << " criteria passed" << std::endl;
  return passed == run ? 0 : 1;
}
