#include "mambair/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <thread>

#include "mambair/data.hpp"
#include "mambair/errors.hpp"
#include "mambair/image_io.hpp"
#include "mambair/losses.hpp"
#include "mambair/metrics.hpp"
#include "mambair/ops.hpp"
#include "mambair/rng.hpp"

namespace mambair {

namespace {

constexpr std::uint64_t kEvalStream = 0xe7a1;
constexpr std::uint64_t kHeldOutStream = 0x4e1d;

Tensor clamp01(const Tensor& t) {
  Tensor out = t.clone();
  for (auto& v : out.data_mut()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

// Largest usable patch side: the task default, shrunk to fit the image and
// floored to a multiple of the scale.
std::size_t patch_side(const RunConfig& config, const Tensor& image) {
  const std::size_t scale = config.model.scale();
  std::size_t p = config.train.patch_size ? config.train.patch_size
                                          : config.train.default_patch(config.model.task);
  p = std::min({p, image.dim(0), image.dim(1)});
  p -= p % scale;
  if (p == 0) throw ConfigError("image smaller than the upscaling factor");
  return p;
}

void round_params(ModelState& params) {
  for (auto& [name, t] : params)
    for (auto& v : t.data_mut()) v = round_to_float(v);
}

double sample_gradient(const ModelState& params, const RunConfig& config, const Sample& s,
                       GradientMap& out) {
  Tape tape;
  double loss_value = 0.0;
  {
    TapeScope scope(tape);
    const Tensor pred = mambair_forward(s.lq, params, config.model);
    const Tensor loss = task_loss(pred, s.hq, config);
    loss_value = loss.item();
    if (!std::isfinite(loss_value)) throw NumericError("non-finite training loss");
    tape.backward(loss);
  }
  tape.clear();
  for (const auto& [name, t] : params) {
    auto& g = out[name];
    g.assign(t.numel(), 0.0);
    if (t.has_grad()) std::copy(t.grad().begin(), t.grad().end(), g.begin());
  }
  return loss_value;
}

}  // namespace

Dataset load_dataset(const std::string& dir, std::size_t eval_images) {
  const auto files = list_images(dir);
  if (files.size() <= eval_images) {
    throw IoError(dir + ": need more than " + std::to_string(eval_images) + " images, found " +
                  std::to_string(files.size()));
  }
  Dataset d;
  const std::size_t ntrain = files.size() - eval_images;
  for (std::size_t i = 0; i < files.size(); ++i) {
    (i < ntrain ? d.train : d.eval).push_back(image_read(files[i]));
  }
  return d;
}

Dataset synthetic_dataset(std::size_t count, std::size_t eval_images, std::size_t size,
                          std::size_t channels, std::uint64_t seed) {
  Dataset d;
  d.train = synthetic_corpus(count, size, channels, seed);
  if (eval_images > 0) {
    d.eval = synthetic_corpus(eval_images, size, channels, derive_seed(seed, kHeldOutStream));
  }
  return d;
}

std::vector<Sample> make_batch(const RunConfig& config, const Dataset& data, std::size_t step) {
  if (data.train.empty()) throw ConfigError("training set is empty");
  Rng rng(derive_seed(config.train.seed, step));
  std::vector<Sample> batch;
  batch.reserve(config.train.batch_size);
  for (std::size_t b = 0; b < config.train.batch_size; ++b) {
    const Tensor& image = data.train[rng.below(data.train.size())];
    const std::size_t p = patch_side(config, image);
    const std::size_t y = rng.below(image.dim(0) - p + 1);
    const std::size_t x = rng.below(image.dim(1) - p + 1);
    const int code = static_cast<int>(rng.below(kNumDihedral));
    Tensor hq = augment(crop(image, y, x, p, p), code);
    Tensor lq = degrade(hq, config.model.task, config.train.sigma(), rng);
    batch.push_back({std::move(lq), std::move(hq)});
  }
  return batch;
}

Tensor task_loss(const Tensor& pred, const Tensor& target, const RunConfig& config) {
  if (config.model.task == Task::kDenoise) {
    return loss_charbonnier(pred, target, config.train.charbonnier_eps);
  }
  return loss_l1(pred, target);
}

double batch_gradients(const ModelState& params, const RunConfig& config,
                       const std::vector<Sample>& batch, GradientMap& grads) {
  const std::size_t n = batch.size();
  if (n == 0) throw ConfigError("empty batch");
  std::vector<GradientMap> per_sample(n);
  std::vector<double> losses(n, 0.0);
  const std::size_t workers = std::clamp<std::size_t>(config.train.workers, 1, n);

  if (workers == 1) {
    ModelState replica = params.clone();
    replica.set_requires_grad(true);
    for (std::size_t i = 0; i < n; ++i) {
      replica.zero_grad();
      losses[i] = sample_gradient(replica, config, batch[i], per_sample[i]);
    }
  } else {
    std::vector<std::exception_ptr> errors(workers);
    {
      std::vector<std::jthread> pool;
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            ModelState replica = params.clone();
            replica.set_requires_grad(true);
            for (std::size_t i = w; i < n; i += workers) {
              replica.zero_grad();
              losses[i] = sample_gradient(replica, config, batch[i], per_sample[i]);
            }
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const double inv = 1.0 / static_cast<double>(n);
  grads.clear();
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    loss += losses[i];
    for (auto& [name, g] : per_sample[i]) {
      auto& acc = grads[name];
      if (acc.empty()) acc.assign(g.size(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) acc[k] += g[k];
    }
  }
  for (auto& [name, g] : grads)
    for (auto& v : g) v *= inv;
  return loss * inv;
}

Tensor self_ensemble_infer(const std::function<Tensor(const Tensor&)>& model, const Tensor& input) {
  Tensor acc;
  for (int code = 0; code < kNumDihedral; ++code) {
    const Tensor out = augment(model(augment(input, code)), inverse_code(code));
    if (!acc.defined()) {
      acc = out.clone();
    } else {
      if (out.shape() != acc.shape()) throw ShapeError("self_ensemble_infer: inconsistent output shapes");
      auto a = acc.data_mut();
      auto o = out.data();
      for (std::size_t i = 0; i < a.size(); ++i) a[i] += o[i];
    }
  }
  for (auto& v : acc.data_mut()) v /= kNumDihedral;
  return acc;
}

Tensor infer(const ModelState& params, const ModelConfig& config, const Tensor& lq, bool ensemble) {
  auto run = [&](const Tensor& x) { return mambair_forward(x, params, config); };
  if (!ensemble) return run(lq);
  if (lq.dim(0) != lq.dim(1)) {
    throw ShapeError("self-ensemble needs a square input, got " + shape_str(lq.shape()));
  }
  return self_ensemble_infer(run, lq);
}

EvalResult evaluate(const ModelState& params, const RunConfig& config,
                    const std::vector<Tensor>& images, bool ensemble) {
  EvalResult r;
  if (images.empty()) return r;
  const std::size_t scale = config.model.scale();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor& full = images[i];
    const Tensor hq = crop(full, 0, 0, full.dim(0) - full.dim(0) % scale, full.dim(1) - full.dim(1) % scale);
    Rng rng(derive_seed(kEvalStream, i));
    const Tensor lq = degrade(hq, config.model.task, config.train.sigma(), rng);
    const Tensor pred = clamp01(infer(params, config.model, lq, ensemble));
    const Tensor base = clamp01(config.model.task == Task::kDenoise ? lq : upsample_bilinear(lq, scale));
    const double p = psnr_y(pred, hq);
    r.per_image_psnr.push_back(p);
    r.psnr += p;
    r.ssim += ssim_y(pred, hq);
    r.baseline_psnr += psnr_y(base, hq);
    r.baseline_ssim += ssim_y(base, hq);
  }
  const double inv = 1.0 / static_cast<double>(images.size());
  r.psnr *= inv;
  r.ssim *= inv;
  r.baseline_psnr *= inv;
  r.baseline_ssim *= inv;
  return r;
}

ModelState load_or_init(const RunConfig& config) {
  ModelState params = init_model(config.model, config.train.seed);
  if (!config.checkpoint.empty()) {
    assign_parameters(params, load_checkpoint(config.checkpoint).params);
  }
  return params;
}

TrainResult train(const RunConfig& config, const Dataset& data, const Checkpoint* resume,
                  const TrainHooks& hooks) {
  validate(config);
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  result.params = init_model(config.model, config.train.seed);
  if (resume) {
    assign_parameters(result.params, resume->params);
    result.optimizer = resume->optimizer;
  } else if (!config.checkpoint.empty()) {
    assign_parameters(result.params, load_checkpoint(config.checkpoint).params);
  }
  round_params(result.params);

  const TrainConfig& tc = config.train;
  GradientMap grads;
  double last_loss = std::numeric_limits<double>::quiet_NaN();
  for (std::size_t step = result.optimizer.step; step < tc.total_steps; ++step) {
    const auto batch = make_batch(config, data, step);
    last_loss = batch_gradients(result.params, config, batch, grads);
    AdamHyper hyper{tc.lr_at(step), tc.beta1, tc.beta2, tc.adam_eps};
    adam_step(result.params, grads, result.optimizer, hyper, /*float_grid=*/true);

    const std::size_t done = step + 1;
    const bool eval_now = tc.eval_every > 0 && (done % tc.eval_every == 0 || done == tc.total_steps);
    if (eval_now) {
      StepLog log{done, last_loss, std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
      if (!data.eval.empty()) {
        const EvalResult e = evaluate(result.params, config, data.eval);
        log.psnr = e.psnr;
        log.ssim = e.ssim;
      }
      result.report.log.push_back(log);
      if (hooks.on_log) hooks.on_log(log);
    }
    if (hooks.on_checkpoint && tc.checkpoint_every > 0 && done % tc.checkpoint_every == 0) {
      hooks.on_checkpoint(done, result.params, result.optimizer);
    }
  }

  result.report.steps = result.optimizer.step;
  result.report.final_loss = last_loss;
  if (!data.eval.empty()) result.report.eval = evaluate(result.params, config, data.eval);
  result.report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

std::string metrics_csv_header() { return "step,loss,psnr,ssim"; }

std::string metrics_csv_row(const StepLog& log) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%.8g,%.6f,%.6f", log.step, log.loss, log.psnr, log.ssim);
  return buf;
}

}  // namespace mambair
