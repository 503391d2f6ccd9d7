#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mambair/checkpoint.hpp"
#include "mambair/config.hpp"
#include "mambair/model.hpp"
#include "mambair/optim.hpp"
#include "mambair/tensor.hpp"

namespace mambair {

struct Dataset {
  std::vector<Tensor> train;  // ground-truth images
  std::vector<Tensor> eval;   // held-out ground truth
};

/// Loads every image in `dir`; the last `eval_images` (by name) are held out.
Dataset load_dataset(const std::string& dir, std::size_t eval_images);
/// Synthetic corpus of `count` training images plus `eval_images` held-out
/// images drawn from a disjoint seed stream.
Dataset synthetic_dataset(std::size_t count, std::size_t eval_images, std::size_t size,
                          std::size_t channels, std::uint64_t seed);

struct Sample {
  Tensor lq;
  Tensor hq;
};

/// The training batch for `step`: random crop, dihedral augmentation and
/// degradation, all drawn from a generator seeded by (seed, step).
std::vector<Sample> make_batch(const RunConfig& config, const Dataset& data, std::size_t step);

using GradientMap = std::map<std::string, std::vector<double>>;

/// Mean loss over the batch and its gradient w.r.t. every parameter. Each
/// sample is differentiated on its own tape and the per-sample gradients are
/// summed in sample order, so the result does not depend on `workers`.
double batch_gradients(const ModelState& params, const RunConfig& config,
                       const std::vector<Sample>& batch, GradientMap& grads);

/// L1 for super-resolution, Charbonnier for denoising.
Tensor task_loss(const Tensor& pred, const Tensor& target, const RunConfig& config);

/// Runs all 8 dihedral transforms through `model`, undoes each transform on
/// the output and averages.
Tensor self_ensemble_infer(const std::function<Tensor(const Tensor&)>& model, const Tensor& input);

Tensor infer(const ModelState& params, const ModelConfig& config, const Tensor& lq,
             bool ensemble = false);

struct EvalResult {
  double psnr = 0.0;           // model output vs ground truth, mean over images
  double ssim = 0.0;
  double baseline_psnr = 0.0;  // noisy input (denoise) or bilinear upsampling (SR)
  double baseline_ssim = 0.0;
  std::vector<double> per_image_psnr;
};

/// Degrades each held-out image with a fixed per-image seed and scores the
/// clamped model output on the Y channel.
EvalResult evaluate(const ModelState& params, const RunConfig& config,
                    const std::vector<Tensor>& images, bool ensemble = false);

struct StepLog {
  std::size_t step = 0;
  double loss = 0.0;
  double psnr = 0.0;  // NaN when no evaluation ran at this step
  double ssim = 0.0;
};

/// Summary emitted by training and evaluation.
struct MetricReport {
  std::vector<StepLog> log;
  std::size_t steps = 0;
  double final_loss = 0.0;
  EvalResult eval;
  double seconds = 0.0;
};

struct TrainHooks {
  std::function<void(const StepLog&)> on_log;
  std::function<void(std::size_t step, const ModelState&, const AdamState&)> on_checkpoint;
};

struct TrainResult {
  ModelState params;
  AdamState optimizer;
  MetricReport report;
};

/// Parameters are kept on the float grid throughout so checkpoints are exact
/// and resuming reproduces an uninterrupted run bit for bit.
TrainResult train(const RunConfig& config, const Dataset& data, const Checkpoint* resume = nullptr,
                  const TrainHooks& hooks = {});

/// Fresh parameters from config.checkpoint if set, otherwise init_model.
ModelState load_or_init(const RunConfig& config);

std::string metrics_csv_header();
std::string metrics_csv_row(const StepLog& log);

}  // namespace mambair
