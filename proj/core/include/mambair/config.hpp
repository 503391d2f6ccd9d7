#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mambair/model.hpp"

namespace mambair {

/// Training protocol. Values not stated otherwise follow the reference
/// training setup (Adam 0.9/0.999, lr 2e-4 halved at milestones).
struct TrainConfig {
  std::size_t patch_size = 0;  // 0: task default (64 for SR, 128 for denoising)
  std::size_t batch_size = 4;
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t total_steps = 2000;
  std::uint64_t seed = 0;
  double noise_level = 25.0;  // on the 0..255 scale
  double charbonnier_eps = 1e-3;
  std::size_t eval_every = 100;
  std::size_t checkpoint_every = 0;
  std::size_t workers = 1;
  std::size_t synthetic_images = 0;  // >0: generate a synthetic corpus when no data dir is given
  std::size_t synthetic_size = 32;
  std::size_t eval_images = 8;

  double sigma() const { return noise_level / 255.0; }
  std::size_t default_patch(Task task) const;
  /// Step indices at which the learning rate halves (50%, 75%, 90%).
  std::vector<std::size_t> milestones() const;
  double lr_at(std::size_t step) const;
  void validate(const ModelConfig& model) const;
};

struct DiagConfig {
  std::size_t erf_size = 16;
  std::string erf_mode = "gray";  // gray | averaged
  std::size_t bench_runs = 5;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DiagConfig diag;
  std::string checkpoint;  // parameters to load instead of a fresh init
};

/// Parses `key = value` lines with `#` comments. Unknown keys throw ConfigError.
RunConfig parse_config(std::string_view text);
RunConfig load_config_file(const std::string& path);

/// Sets one key; the same grammar as a config line.
void apply_override(RunConfig& config, std::string_view key, std::string_view value);
/// Parses "key=value".
void apply_override(RunConfig& config, std::string_view assignment);

/// Canonical text form of every key, loadable by parse_config.
std::string to_config_text(const RunConfig& config);

std::vector<std::string> config_keys();

void validate(const RunConfig& config);

}  // namespace mambair
