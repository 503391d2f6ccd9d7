#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mambair/attention.hpp"
#include "mambair/scan2d.hpp"
#include "mambair/tensor.hpp"

namespace mambair {

enum class Task { kSr2, kSr3, kSr4, kDenoise };
enum class Mixer { kSsm, kFullAttention };

std::string to_string(Task task);
std::string to_string(Mixer mixer);

/// Architecture hyperparameters. Defaults are the desk-scale toy network.
struct ModelConfig {
  std::size_t channels = 16;
  std::size_t groups = 2;
  std::size_t blocks_per_group = 2;
  std::size_t state_size = 8;
  double expansion = 2.0;        // VSSM channel expansion
  std::size_t bottleneck = 4;    // local-conv compression
  std::size_t ca_reduction = 16;
  std::size_t in_channels = 3;
  Task task = Task::kDenoise;

  // Ablation switches.
  bool use_local_conv = true;
  bool use_channel_attention = true;
  bool replace_with_mlp = false;
  std::size_t scan_directions = 4;
  bool shared_scan_params = false;

  ScanMode scan_mode = ScanMode::kSequential;
  Mixer mixer = Mixer::kSsm;
  // Zero the final reconstruction conv, so a denoiser starts as the identity
  // (and an upsampler with the skip below as bilinear).
  bool identity_init = false;
  // Add the bilinearly upsampled input to the upsampler's output.
  bool upsample_skip = true;

  void validate() const;
  std::size_t scale() const;
  std::size_t inner_channels() const;
};

/// Named parameter store. Iteration order is by name.
class ModelState {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t parameter_count() const;
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }

  /// Deep copy; gradients are not copied.
  ModelState clone() const;
  void set_requires_grad(bool on);
  void zero_grad();

 private:
  std::map<std::string, Tensor> params_;
};

ModelState init_model(const ModelConfig& config, std::uint64_t seed);

struct ChannelAttentionWeights {
  Tensor w1, b1;  // [C, C/r], [C/r]
  Tensor w2, b2;  // [C/r, C], [C]
};

/// Squeeze-and-excitation gating: x * sigmoid(W2 relu(W1 gap(x))).
Tensor channel_attention(const Tensor& x, const ChannelAttentionWeights& w);

struct VssmWeights {
  Tensor in_w, in_b;      // [C, lC]: scan branch
  Tensor gate_w, gate_b;  // [C, lC]: gating branch
  Tensor dw_w, dw_b;      // [3, 3, lC]
  Tensor ln_g, ln_b;      // [lC]
  std::vector<scan2d::DirectionParams> scan;
  Tensor out_w, out_b;    // [lC, C]
};

struct VssmOptions {
  std::size_t directions = 4;
  ScanMode mode = ScanMode::kSequential;
};

/// LN(2D-SSM(SiLU(DWConv(Linear x)))) * SiLU(Linear x), projected back to C.
Tensor vssm_forward(const Tensor& x, const VssmWeights& w, const VssmOptions& opts = {});

struct RssbWeights {
  Tensor ln1_g, ln1_b;
  Tensor skip_scale;  // s
  VssmWeights vssm;
  AttentionWeights attention;  // used instead of vssm for the attention mixer
  Tensor ln2_g, ln2_b;
  Tensor conv1_w, conv1_b;  // C -> C/gamma
  Tensor conv2_w, conv2_b;  // C/gamma -> C
  ChannelAttentionWeights ca;
  Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
  Tensor skip_scale2;  // s'
};

VssmWeights vssm_weights(const ModelState& state, const std::string& prefix,
                         const ModelConfig& config);
RssbWeights rssb_weights(const ModelState& state, const std::string& prefix,
                         const ModelConfig& config);

/// Z = VSSM(LN(F)) + s*F; out = CA(Conv(LN(Z))) + s'*Z, with the ablation
/// switches of `config` applied to the second stage. If mixer_out is non-null
/// it receives the VSSM output.
Tensor rssb_forward(const Tensor& f, const RssbWeights& w, const ModelConfig& config,
                    Tensor* mixer_out = nullptr);

/// Intermediate values captured during a forward pass.
struct ForwardTrace {
  Tensor last_mixer_output;  // VSSM output of the final block
  Tensor shallow;            // F_S
  Tensor deep;               // output of the last group
};

/// Shallow conv -> residual groups -> reconstruction head.
Tensor mambair_forward(const Tensor& input, const ModelState& state, const ModelConfig& config,
                       ForwardTrace* trace = nullptr);

std::string block_prefix(std::size_t group, std::size_t block);

}  // namespace mambair
