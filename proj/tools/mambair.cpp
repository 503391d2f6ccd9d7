// mambair: train, run and inspect the restoration network from the shell.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "mambair/checkpoint.hpp"
#include "mambair/config.hpp"
#include "mambair/data.hpp"
#include "mambair/diagnostics.hpp"
#include "mambair/errors.hpp"
#include "mambair/image_io.hpp"
#include "mambair/selftest.hpp"
#include "mambair/train.hpp"

namespace fs = std::filesystem;
using namespace mambair;

namespace {

enum Exit { kOk = 0, kFailed = 1, kConfig = 2, kIo = 3, kNumeric = 4 };

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string input;
  bool ensemble = false;
  std::string variant = "both";
  std::string sizes = "48,60,72,84,96";
};

RunConfig resolve_config(const Options& o) {
  RunConfig config = o.config_path.empty() ? RunConfig{} : load_config_file(o.config_path);
  for (const auto& s : o.sets) apply_override(config, s);
  if (o.seed) config.train.seed = *o.seed;
  validate(config);
  return config;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

std::vector<std::string> input_images(const std::string& input) {
  if (input.empty()) throw ConfigError("--input is required");
  if (fs::is_directory(input)) {
    auto files = list_images(input);
    if (files.empty()) throw IoError(input + ": no .pgm/.ppm images");
    return files;
  }
  if (!fs::exists(input)) throw IoError(input + ": no such file");
  return {input};
}

int cmd_train(const Options& o) {
  const RunConfig config = resolve_config(o);
  Dataset data;
  if (!o.input.empty()) {
    data = load_dataset(o.input, config.train.eval_images);
  } else if (config.train.synthetic_images > 0) {
    data = synthetic_dataset(config.train.synthetic_images, config.train.eval_images,
                             config.train.synthetic_size, config.model.in_channels, config.train.seed);
  } else {
    throw ConfigError("train needs --input DIR or synthetic_images > 0");
  }
  const std::string out = o.out.empty() ? "model.mirc" : o.out;
  write_text(out + ".cfg", to_config_text(config));

  std::ofstream log(out + ".metrics.csv");
  if (!log) throw IoError("cannot write " + out + ".metrics.csv");
  log << metrics_csv_header() << '\n';

  TrainHooks hooks;
  hooks.on_log = [&](const StepLog& s) {
    log << metrics_csv_row(s) << '\n' << std::flush;
    std::cerr << "step " << s.step << " loss " << s.loss << " psnr " << s.psnr << '\n';
  };
  hooks.on_checkpoint = [&](std::size_t, const ModelState& p, const AdamState& a) {
    save_checkpoint(out, p, a);
  };
  std::optional<Checkpoint> resume;
  if (!config.checkpoint.empty()) {
    resume = load_checkpoint(config.checkpoint);
    if (resume->optimizer.step == 0) resume.reset();  // a bare parameter file
  }
  const TrainResult result = train(config, data, resume ? &*resume : nullptr, hooks);
  save_checkpoint(out, result.params, result.optimizer);
  std::cout << "steps " << result.report.steps << " final_loss " << result.report.final_loss;
  if (!data.eval.empty()) {
    std::cout << " psnr " << result.report.eval.psnr << " baseline_psnr " << result.report.eval.baseline_psnr
              << " ssim " << result.report.eval.ssim;
  }
  std::cout << "\ncheckpoint " << out << '\n';
  return kOk;
}

int cmd_infer(const Options& o) {
  const RunConfig config = resolve_config(o);
  const ModelState params = load_or_init(config);
  const auto files = input_images(o.input);
  if (o.out.empty()) throw ConfigError("--out is required");
  const bool many = fs::is_directory(o.input);
  if (many) fs::create_directories(o.out);
  for (const auto& f : files) {
    const Tensor lq = image_read(f);
    const Tensor out = infer(params, config.model, lq, o.ensemble);
    const std::string dest = many ? (fs::path(o.out) / fs::path(f).filename()).string() : o.out;
    image_write(dest, out);
    std::cout << f << " -> " << dest << '\n';
  }
  return kOk;
}

int cmd_erf(const Options& o) {
  const RunConfig config = resolve_config(o);
  const ModelState params = load_or_init(config);
  const auto erf = diag::compute_erf(diag::bind_model(params, config.model), config.diag.erf_size,
                                     config.model.in_channels, diag::parse_erf_mode(config.diag.erf_mode),
                                     config.train.seed);
  const std::string out = o.out.empty() ? "erf" : o.out;
  diag::write_erf_pgm(out + ".pgm", erf);
  write_text(out + ".csv", diag::erf_csv(erf));
  std::size_t support = 0;
  for (double v : erf.raw) support += v > 1e-12;
  std::cout << "erf " << erf.height << "x" << erf.width << " support " << support << "/" << erf.raw.size()
            << " -> " << out << ".pgm, " << out << ".csv\n";
  return kOk;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(item, &used);
      if (used != item.size() || v <= 0) throw std::invalid_argument(item);
      sizes.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError("--sizes: bad entry '" + item + "'");
    }
  }
  if (sizes.size() < 4) throw ConfigError("--sizes needs at least 4 sizes");
  return sizes;
}

int cmd_bench(const Options& o) {
  const RunConfig config = resolve_config(o);
  std::vector<std::string> variants;
  if (o.variant == "both") {
    variants = {"ssm", "full_attention"};
  } else {
    variants = {o.variant};
  }
  const auto report = diag::complexity_bench(parse_sizes(o.sizes), variants,
                                             std::max<std::size_t>(config.diag.bench_runs, 5),
                                             config.train.seed, config.model.channels);
  const std::string csv = diag::bench_csv(report.records);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text(o.out, csv);
  }
  for (const auto& [variant, slope] : report.slopes) std::cout << "slope " << variant << " " << slope << '\n';
  return kOk;
}

int cmd_channels(const Options& o) {
  const RunConfig config = resolve_config(o);
  const ModelState params = load_or_init(config);
  std::vector<Tensor> inputs;
  if (o.input.empty()) {
    inputs = synthetic_corpus(std::max<std::size_t>(config.train.eval_images, 1), config.train.synthetic_size,
                              config.model.in_channels, config.train.seed);
  } else {
    for (const auto& f : input_images(o.input)) inputs.push_back(image_read(f));
  }
  const auto stats = diag::channel_activation_stats(params, config.model, inputs);
  const std::string csv = diag::channel_csv(stats);
  if (o.out.empty()) {
    std::cout << csv;
  } else {
    write_text(o.out, csv);
  }
  std::cout << "channels " << stats.activation.size() << " near_zero_fraction " << stats.near_zero_fraction
            << '\n';
  return kOk;
}

int cmd_selftest() {
  const auto results = selftest::run_all(&std::cout);
  std::size_t failed = 0;
  for (const auto& r : results) failed += !r.passed;
  std::cout << (results.size() - failed) << "/" << results.size() << " checks passed\n";
  return failed ? kFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image restoration with 2D selective state-space blocks"};
  app.require_subcommand(1);
  app.fallthrough();
  Options o;
  app.add_option("--config", o.config_path, "Config file (key = value lines)");
  app.add_option("--set", o.sets, "Override a config key, key=value (repeatable, last wins)");
  app.add_option("--seed", o.seed, "Seed for initialization, sampling and noise");
  app.add_option("--out", o.out, "Output path or prefix");
  app.add_option("--input", o.input, "Input image or directory");
  app.add_flag("--ensemble", o.ensemble, "Average over the 8 flips/rotations at inference");
  app.add_option("--variant", o.variant, "Bench variant")->check(CLI::IsMember({"ssm", "full_attention", "both"}));
  app.add_option("--sizes", o.sizes, "Bench side lengths, comma separated");

  auto* train = app.add_subcommand("train", "Train and write a checkpoint plus a metrics CSV");
  auto* infer = app.add_subcommand("infer", "Restore an image or a directory of images");
  auto* erf = app.add_subcommand("erf", "Effective receptive field heatmap and CSV");
  auto* bench = app.add_subcommand("bench", "Forward-pass scaling against full attention");
  auto* channels = app.add_subcommand("channels", "Per-channel activation statistics");
  auto* selftest = app.add_subcommand("selftest", "Run the property and equivalence checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*train) return cmd_train(o);
    if (*infer) return cmd_infer(o);
    if (*erf) return cmd_erf(o);
    if (*bench) return cmd_bench(o);
    if (*channels) return cmd_channels(o);
    if (*selftest) return cmd_selftest();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const ShapeError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kFailed;
}
