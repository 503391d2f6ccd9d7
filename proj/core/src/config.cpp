#include "mambair/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "mambair/errors.hpp"

namespace mambair {

std::size_t TrainConfig::default_patch(Task task) const {
  if (patch_size != 0) return patch_size;
  return task == Task::kDenoise ? 128 : 64;
}

std::vector<std::size_t> TrainConfig::milestones() const {
  return {total_steps / 2, total_steps * 3 / 4, total_steps * 9 / 10};
}

double TrainConfig::lr_at(std::size_t step) const {
  double lr = learning_rate;
  for (std::size_t m : milestones()) {
    if (m > 0 && step >= m) lr *= 0.5;
  }
  return lr;
}

void TrainConfig::validate(const ModelConfig& model) const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(learning_rate > 0)) fail("learning_rate must be positive");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) fail("betas must be in [0,1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (!(sigma() > 0 && sigma() < 1)) fail("noise_level must be in (0, 255)");
  if (!(charbonnier_eps > 0)) fail("charbonnier_eps must be positive");
  if (default_patch(model.task) % model.scale() != 0) fail("patch_size must be divisible by scale");
  if (workers == 0) fail("workers must be positive");
}

void validate(const RunConfig& config) {
  config.model.validate();
  config.train.validate(config.model);
  if (config.diag.erf_mode != "gray" && config.diag.erf_mode != "averaged") {
    throw ConfigError("erf_mode must be gray or averaged");
  }
  if (config.diag.bench_runs < 5) throw ConfigError("bench_runs must be at least 5");
  if (config.diag.erf_size == 0) throw ConfigError("erf_size must be positive");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + v + "'");
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct KeySpec {
  std::string name;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define SIZE_KEY(key, field)                                                              \
  KeySpec {                                                                               \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_size(key, v); },        \
        [](const RunConfig& c) { return std::to_string(c.field); }                        \
  }
#define DOUBLE_KEY(key, field)                                                            \
  KeySpec {                                                                               \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_double(key, v); },      \
        [](const RunConfig& c) { return fmt_double(c.field); }                            \
  }
#define BOOL_KEY(key, field)                                                              \
  KeySpec {                                                                               \
    key, [](RunConfig& c, const std::string& v) { c.field = parse_bool(key, v); },        \
        [](const RunConfig& c) { return std::string(c.field ? "true" : "false"); }        \
  }

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      SIZE_KEY("channels", model.channels),
      SIZE_KEY("groups", model.groups),
      SIZE_KEY("blocks_per_group", model.blocks_per_group),
      SIZE_KEY("state_size", model.state_size),
      DOUBLE_KEY("expansion", model.expansion),
      SIZE_KEY("bottleneck", model.bottleneck),
      SIZE_KEY("ca_reduction", model.ca_reduction),
      SIZE_KEY("in_channels", model.in_channels),
      KeySpec{"task",
              [](RunConfig& c, const std::string& v) {
                if (v == "sr2") c.model.task = Task::kSr2;
                else if (v == "sr3") c.model.task = Task::kSr3;
                else if (v == "sr4") c.model.task = Task::kSr4;
                else if (v == "denoise") c.model.task = Task::kDenoise;
                else throw ConfigError("key 'task': expected sr2, sr3, sr4 or denoise, got '" + v + "'");
              },
              [](const RunConfig& c) { return to_string(c.model.task); }},
      BOOL_KEY("use_local_conv", model.use_local_conv),
      BOOL_KEY("use_channel_attention", model.use_channel_attention),
      BOOL_KEY("replace_with_mlp", model.replace_with_mlp),
      SIZE_KEY("scan_directions", model.scan_directions),
      BOOL_KEY("shared_scan_params", model.shared_scan_params),
      KeySpec{"scan_mode",
              [](RunConfig& c, const std::string& v) {
                if (v == "sequential") c.model.scan_mode = ScanMode::kSequential;
                else if (v == "parallel") c.model.scan_mode = ScanMode::kParallel;
                else throw ConfigError("key 'scan_mode': expected sequential or parallel, got '" + v + "'");
              },
              [](const RunConfig& c) {
                return std::string(c.model.scan_mode == ScanMode::kParallel ? "parallel"
                                                                            : "sequential");
              }},
      KeySpec{"mixer",
              [](RunConfig& c, const std::string& v) {
                if (v == "ssm") c.model.mixer = Mixer::kSsm;
                else if (v == "full_attention") c.model.mixer = Mixer::kFullAttention;
                else throw ConfigError("key 'mixer': expected ssm or full_attention, got '" + v + "'");
              },
              [](const RunConfig& c) { return to_string(c.model.mixer); }},
      BOOL_KEY("identity_init", model.identity_init),
      BOOL_KEY("upsample_skip", model.upsample_skip),
      SIZE_KEY("patch_size", train.patch_size),
      SIZE_KEY("batch_size", train.batch_size),
      DOUBLE_KEY("learning_rate", train.learning_rate),
      DOUBLE_KEY("beta1", train.beta1),
      DOUBLE_KEY("beta2", train.beta2),
      DOUBLE_KEY("adam_eps", train.adam_eps),
      SIZE_KEY("total_steps", train.total_steps),
      SIZE_KEY("seed", train.seed),
      DOUBLE_KEY("noise_level", train.noise_level),
      DOUBLE_KEY("charbonnier_eps", train.charbonnier_eps),
      SIZE_KEY("eval_every", train.eval_every),
      SIZE_KEY("checkpoint_every", train.checkpoint_every),
      SIZE_KEY("workers", train.workers),
      SIZE_KEY("synthetic_images", train.synthetic_images),
      SIZE_KEY("synthetic_size", train.synthetic_size),
      SIZE_KEY("eval_images", train.eval_images),
      SIZE_KEY("erf_size", diag.erf_size),
      KeySpec{"erf_mode", [](RunConfig& c, const std::string& v) { c.diag.erf_mode = v; },
              [](const RunConfig& c) { return c.diag.erf_mode; }},
      SIZE_KEY("bench_runs", diag.bench_runs),
      KeySpec{"checkpoint", [](RunConfig& c, const std::string& v) { c.checkpoint = v; },
              [](const RunConfig& c) { return c.checkpoint; }},
  };
  return keys;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY

}  // namespace

void apply_override(RunConfig& config, std::string_view key, std::string_view value) {
  const std::string k = trim(key);
  const auto& keys = schema();
  auto it = std::find_if(keys.begin(), keys.end(), [&](const KeySpec& s) { return s.name == k; });
  if (it == keys.end()) throw ConfigError("unknown config key '" + k + "'");
  it->set(config, trim(value));
}

void apply_override(RunConfig& config, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key=value, got '" + std::string(assignment) + "'");
  }
  apply_override(config, assignment.substr(0, eq), assignment.substr(eq + 1));
}

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::size_t lineno = 0;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      apply_override(config, std::string_view(body).substr(0, eq),
                     std::string_view(body).substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return config;
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string to_config_text(const RunConfig& config) {
  std::string out;
  for (const auto& k : schema()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  for (const auto& k : schema()) out.push_back(k.name);
  return out;
}

}  // namespace mambair
