#include "mambair/model.hpp"

#include <cmath>
#include <stdexcept>

#include "mambair/errors.hpp"
#include "mambair/ops.hpp"
#include "mambair/rng.hpp"

namespace mambair {

std::string to_string(Task task) {
  switch (task) {
    case Task::kSr2: return "sr2";
    case Task::kSr3: return "sr3";
    case Task::kSr4: return "sr4";
    case Task::kDenoise: return "denoise";
  }
  return "?";
}

std::string to_string(Mixer mixer) {
  return mixer == Mixer::kSsm ? "ssm" : "full_attention";
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (channels == 0 || groups == 0 || blocks_per_group == 0 || state_size == 0) {
    fail("channels, groups, blocks_per_group and state_size must be positive");
  }
  if (bottleneck == 0 || channels % bottleneck != 0) {
    fail("channels must be divisible by bottleneck");
  }
  if (ca_reduction == 0 || channels % ca_reduction != 0) {
    fail("channels must be divisible by ca_reduction");
  }
  const double inner = expansion * static_cast<double>(channels);
  if (!(expansion > 0) || std::abs(inner - std::round(inner)) > 1e-9) {
    fail("expansion * channels must be a positive integer");
  }
  if (scan_directions != 1 && scan_directions != 2 && scan_directions != 4) {
    fail("scan_directions must be 1, 2 or 4");
  }
  if (in_channels != 1 && in_channels != 3) fail("in_channels must be 1 or 3");
}

std::size_t ModelConfig::scale() const {
  switch (task) {
    case Task::kSr2: return 2;
    case Task::kSr3: return 3;
    case Task::kSr4: return 4;
    case Task::kDenoise: return 1;
  }
  return 1;
}

std::size_t ModelConfig::inner_channels() const {
  return static_cast<std::size_t>(std::llround(expansion * static_cast<double>(channels)));
}

void ModelState::add(const std::string& name, Tensor value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

const Tensor& ModelState::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

Tensor& ModelState::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
  return it->second;
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

ModelState ModelState::clone() const {
  ModelState out;
  for (const auto& [name, t] : params_) out.params_.emplace(name, t.clone());
  return out;
}

void ModelState::set_requires_grad(bool on) {
  for (auto& [name, t] : params_) t.set_requires_grad(on);
}

void ModelState::zero_grad() {
  for (auto& [name, t] : params_) t.zero_grad();
}

std::string block_prefix(std::size_t group, std::size_t block) {
  return "g" + std::to_string(group) + ".b" + std::to_string(block) + ".";
}

namespace {

class Initializer {
 public:
  Initializer(ModelState& state, std::uint64_t seed) : state_(state), rng_(seed) {}

  Rng& rng() { return rng_; }

  // Uniform in +-1/sqrt(fan_in), the usual default for conv and linear layers.
  void uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    Tensor t(std::move(shape));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : t.data_mut()) v = rng_.uniform(-bound, bound);
    state_.add(name, std::move(t));
  }
  void fill(const std::string& name, Shape shape, double value) {
    state_.add(name, Tensor(std::move(shape), value));
  }
  void conv(const std::string& name, std::size_t k, std::size_t cin, std::size_t cout) {
    uniform(name + ".w", {k, k, cin, cout}, k * k * cin);
    fill(name + ".b", {cout}, 0.0);
  }
  void dense(const std::string& name, std::size_t cin, std::size_t cout) {
    uniform(name + ".w", {cin, cout}, cin);
    fill(name + ".b", {cout}, 0.0);
  }
  void norm(const std::string& name, std::size_t c) {
    fill(name + ".g", {c}, 1.0);
    fill(name + ".b", {c}, 0.0);
  }

 private:
  ModelState& state_;
  Rng rng_;
};

std::size_t scan_param_sets(const ModelConfig& config) {
  return config.shared_scan_params ? 1 : config.scan_directions;
}

}  // namespace

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  Initializer init(state, seed);
  const std::size_t c = config.channels;

  init.conv("head", 3, config.in_channels, c);
  for (std::size_t g = 0; g < config.groups; ++g) {
    for (std::size_t b = 0; b < config.blocks_per_group; ++b) {
      const std::string p = block_prefix(g, b);
      init.norm(p + "ln1", c);
      init.fill(p + "s", {c}, 1.0);
      if (config.mixer == Mixer::kSsm) {
        const std::size_t inner = config.inner_channels();
        init.dense(p + "vssm.in", c, inner);
        init.dense(p + "vssm.gate", c, inner);
        init.uniform(p + "vssm.dw.w", {3, 3, inner}, 9);
        init.fill(p + "vssm.dw.b", {inner}, 0.0);
        for (std::size_t d = 0; d < scan_param_sets(config); ++d) {
          const std::string sp = p + "vssm.scan" + std::to_string(d) + ".";
          scan2d::DirectionParams dp =
              scan2d::init_direction_params(inner, config.state_size, init.rng());
          state.add(sp + "w_delta", dp.w_delta);
          state.add(sp + "b_delta", dp.b_delta);
          state.add(sp + "w_b", dp.w_b);
          state.add(sp + "w_c", dp.w_c);
          state.add(sp + "a_log", dp.a_log);
          state.add(sp + "d", dp.d);
        }
        init.norm(p + "vssm.ln", inner);
        init.dense(p + "vssm.out", inner, c);
      } else {
        AttentionWeights aw = init_attention_weights(c, init.rng());
        state.add(p + "attn.q.w", aw.wq);
        state.add(p + "attn.q.b", aw.bq);
        state.add(p + "attn.k.w", aw.wk);
        state.add(p + "attn.k.b", aw.bk);
        state.add(p + "attn.v.w", aw.wv);
        state.add(p + "attn.v.b", aw.bv);
        state.add(p + "attn.o.w", aw.wo);
        state.add(p + "attn.o.b", aw.bo);
      }
      init.norm(p + "ln2", c);
      if (config.replace_with_mlp) {
        init.dense(p + "mlp.fc1", c, 2 * c);
        init.dense(p + "mlp.fc2", 2 * c, c);
      } else {
        if (config.use_local_conv) {
          init.conv(p + "conv1", 3, c, c / config.bottleneck);
          init.conv(p + "conv2", 3, c / config.bottleneck, c);
        }
        if (config.use_channel_attention) {
          init.dense(p + "ca.fc1", c, c / config.ca_reduction);
          init.dense(p + "ca.fc2", c / config.ca_reduction, c);
        }
      }
      init.fill(p + "s2", {c}, 1.0);
    }
    init.conv("g" + std::to_string(g) + ".conv", 3, c, c);
  }

  const std::size_t s = config.scale();
  if (s > 1) {
    init.conv("recon.pre", 3, c, c);
    init.conv("recon.up", 3, c, s * s * c);
  }
  init.conv("recon.last", 3, c, config.in_channels);
  if (config.identity_init) {
    for (auto& v : state.at("recon.last.w").data_mut()) v = 0.0;
  }
  return state;
}

Tensor channel_attention(const Tensor& x, const ChannelAttentionWeights& w) {
  if (x.rank() != 3) throw ShapeError("channel_attention: expected [H,W,C]");
  const Tensor pooled = reshape(global_avg_pool(x), {1, x.dim(2)});
  const Tensor hidden = relu(linear(pooled, w.w1, w.b1));
  const Tensor gate = sigmoid(linear(hidden, w.w2, w.b2));
  return mul_channel(x, reshape(gate, {x.dim(2)}));
}

Tensor vssm_forward(const Tensor& x, const VssmWeights& w, const VssmOptions& opts) {
  if (x.rank() != 3) throw ShapeError("vssm_forward: expected [H,W,C]");
  const Tensor branch = silu(depthwise_conv2d(linear(x, w.in_w, w.in_b), w.dw_w, w.dw_b));
  const Tensor scanned = scan2d::ssm2d_forward(branch, w.scan, opts.directions, opts.mode);
  const Tensor x1 = layer_norm(scanned, w.ln_g, w.ln_b);
  const Tensor x2 = silu(linear(x, w.gate_w, w.gate_b));
  return linear(mul(x1, x2), w.out_w, w.out_b);
}

VssmWeights vssm_weights(const ModelState& state, const std::string& prefix,
                         const ModelConfig& config) {
  const std::string p = prefix + "vssm.";
  VssmWeights w;
  w.in_w = state.at(p + "in.w");
  w.in_b = state.at(p + "in.b");
  w.gate_w = state.at(p + "gate.w");
  w.gate_b = state.at(p + "gate.b");
  w.dw_w = state.at(p + "dw.w");
  w.dw_b = state.at(p + "dw.b");
  w.ln_g = state.at(p + "ln.g");
  w.ln_b = state.at(p + "ln.b");
  w.out_w = state.at(p + "out.w");
  w.out_b = state.at(p + "out.b");
  for (std::size_t d = 0; d < scan_param_sets(config); ++d) {
    const std::string sp = p + "scan" + std::to_string(d) + ".";
    w.scan.push_back({state.at(sp + "w_delta"), state.at(sp + "b_delta"), state.at(sp + "w_b"),
                      state.at(sp + "w_c"), state.at(sp + "a_log"), state.at(sp + "d")});
  }
  return w;
}

RssbWeights rssb_weights(const ModelState& state, const std::string& p,
                         const ModelConfig& config) {
  RssbWeights w;
  w.ln1_g = state.at(p + "ln1.g");
  w.ln1_b = state.at(p + "ln1.b");
  w.skip_scale = state.at(p + "s");
  if (config.mixer == Mixer::kSsm) {
    w.vssm = vssm_weights(state, p, config);
  } else {
    w.attention = {state.at(p + "attn.q.w"), state.at(p + "attn.q.b"),
                   state.at(p + "attn.k.w"), state.at(p + "attn.k.b"),
                   state.at(p + "attn.v.w"), state.at(p + "attn.v.b"),
                   state.at(p + "attn.o.w"), state.at(p + "attn.o.b")};
  }
  w.ln2_g = state.at(p + "ln2.g");
  w.ln2_b = state.at(p + "ln2.b");
  if (config.replace_with_mlp) {
    w.mlp_w1 = state.at(p + "mlp.fc1.w");
    w.mlp_b1 = state.at(p + "mlp.fc1.b");
    w.mlp_w2 = state.at(p + "mlp.fc2.w");
    w.mlp_b2 = state.at(p + "mlp.fc2.b");
  } else {
    if (config.use_local_conv) {
      w.conv1_w = state.at(p + "conv1.w");
      w.conv1_b = state.at(p + "conv1.b");
      w.conv2_w = state.at(p + "conv2.w");
      w.conv2_b = state.at(p + "conv2.b");
    }
    if (config.use_channel_attention) {
      w.ca = {state.at(p + "ca.fc1.w"), state.at(p + "ca.fc1.b"), state.at(p + "ca.fc2.w"),
              state.at(p + "ca.fc2.b")};
    }
  }
  w.skip_scale2 = state.at(p + "s2");
  return w;
}

Tensor rssb_forward(const Tensor& f, const RssbWeights& w, const ModelConfig& config,
                    Tensor* mixer_out) {
  const Tensor normed = layer_norm(f, w.ln1_g, w.ln1_b);
  const Tensor mixed = config.mixer == Mixer::kSsm
                           ? vssm_forward(normed, w.vssm, {config.scan_directions, config.scan_mode})
                           : full_attention_forward(normed, w.attention);
  if (mixer_out) *mixer_out = mixed;
  const Tensor z = add(mixed, mul_channel(f, w.skip_scale));

  Tensor local = layer_norm(z, w.ln2_g, w.ln2_b);
  if (config.replace_with_mlp) {
    local = linear(gelu(linear(local, w.mlp_w1, w.mlp_b1)), w.mlp_w2, w.mlp_b2);
  } else {
    if (config.use_local_conv) {
      local = conv2d(gelu(conv2d(local, w.conv1_w, w.conv1_b, 1)), w.conv2_w, w.conv2_b, 1);
    }
    if (config.use_channel_attention) local = channel_attention(local, w.ca);
  }
  return add(local, mul_channel(z, w.skip_scale2));
}

Tensor mambair_forward(const Tensor& input, const ModelState& state, const ModelConfig& config,
                       ForwardTrace* trace) {
  if (input.rank() != 3 || input.dim(2) != config.in_channels) {
    throw ConfigError("model expects [H,W," + std::to_string(config.in_channels) +
                      "] input for task " + to_string(config.task) + ", got " +
                      shape_str(input.shape()));
  }
  const Tensor shallow = conv2d(input, state.at("head.w"), state.at("head.b"), 1);
  Tensor feat = shallow;
  Tensor last_mixer;
  for (std::size_t g = 0; g < config.groups; ++g) {
    Tensor x = feat;
    for (std::size_t b = 0; b < config.blocks_per_group; ++b) {
      const RssbWeights w = rssb_weights(state, block_prefix(g, b), config);
      x = rssb_forward(x, w, config, &last_mixer);
    }
    const std::string cp = "g" + std::to_string(g) + ".conv";
    feat = add(conv2d(x, state.at(cp + ".w"), state.at(cp + ".b"), 1), feat);
  }
  if (trace) {
    trace->last_mixer_output = last_mixer;
    trace->shallow = shallow;
    trace->deep = feat;
  }
  Tensor recon = add(feat, shallow);

  const std::size_t s = config.scale();
  if (s > 1) {
    recon = conv2d(recon, state.at("recon.pre.w"), state.at("recon.pre.b"), 1);
    recon = pixel_shuffle(conv2d(recon, state.at("recon.up.w"), state.at("recon.up.b"), 1), s);
    recon = conv2d(recon, state.at("recon.last.w"), state.at("recon.last.b"), 1);
    return config.upsample_skip ? add(recon, upsample_bilinear(input, s)) : recon;
  }
  return add(conv2d(recon, state.at("recon.last.w"), state.at("recon.last.b"), 1), input);
}

}  // namespace mambair
