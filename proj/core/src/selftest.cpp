#include "mambair/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <ostream>
#include <set>

#include "mambair/attention.hpp"
#include "mambair/checkpoint.hpp"
#include "mambair/data.hpp"
#include "mambair/diagnostics.hpp"
#include "mambair/losses.hpp"
#include "mambair/metrics.hpp"
#include "mambair/model.hpp"
#include "mambair/ops.hpp"
#include "mambair/scan2d.hpp"
#include "mambair/train.hpp"

namespace mambair::selftest {

namespace {

std::string fmt(const char* f, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

CheckResult timed(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r{name, false, "", 0.0};
  try {
    auto [ok, detail] = body();
    r.passed = ok;
    r.detail = std::move(detail);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_mut()) v = rng.uniform(lo, hi);
  return t;
}

bool same_bits(std::span<const double> a, std::span<const double> b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

std::string format_result(const CheckResult& r) {
  char buf[64];
  std::snprintf(buf, sizeof buf, " (%.2f s)", r.seconds);
  return std::string(r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail + buf;
}

ssm::LtiParams random_lti(Rng& rng, std::size_t max_state) {
  const std::size_t n = 1 + rng.below(max_state);
  std::vector<double> a_log(n), b(n), c(n);
  for (auto& v : a_log) v = rng.uniform(-2.0, 2.0);
  for (auto& v : b) v = rng.uniform(-1.0, 1.0);
  for (auto& v : c) v = rng.uniform(-1.0, 1.0);
  return ssm::LtiParams::from_log(a_log, b, c, rng.uniform(-1.0, 1.0));
}

ssm::SelectiveParams random_selective(Rng& rng, std::size_t length, std::size_t channels,
                                      std::size_t state) {
  ssm::SelectiveParams p;
  p.length = length;
  p.channels = channels;
  p.state = state;
  p.a_log.resize(channels * state);
  for (auto& v : p.a_log) v = rng.uniform(-1.0, 2.0);
  p.delta.resize(length * channels);
  for (auto& v : p.delta) v = std::exp(rng.uniform(std::log(1e-3), 0.0));
  p.b = random_normal(rng, length * state);
  p.c = random_normal(rng, length * state);
  p.d.resize(channels);
  for (auto& v : p.d) v = rng.uniform(-1.0, 1.0);
  return p;
}

std::vector<double> random_normal(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

GradCheck grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                     std::size_t samples, std::uint64_t seed, double step, double floor) {
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    tape.backward(loss());
  }
  std::size_t total = 0;
  for (const auto& p : params) total += p.numel();
  Rng rng(seed);
  GradCheck out;
  for (std::size_t s = 0; s < samples; ++s) {
    std::size_t k = rng.below(total);
    std::size_t which = 0;
    while (k >= params[which].numel()) k -= params[which++].numel();
    Tensor& p = params[which];
    const double analytic = p.has_grad() ? p.grad()[k] : 0.0;
    const double orig = p[k];
    p.data_mut()[k] = orig + step;
    const double up = loss().item();
    p.data_mut()[k] = orig - step;
    const double down = loss().item();
    p.data_mut()[k] = orig;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    out.max_rel_error = std::max(out.max_rel_error, std::abs(analytic - numeric) / denom);
    ++out.checked;
  }
  return out;
}

CheckResult check_form_equivalence(std::size_t trials, std::uint64_t seed) {
  return timed("LTI recurrent == convolutional", [=] {
    Rng rng(seed);
    double worst = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto p = random_lti(rng, 8);
      const double delta = rng.uniform(0.01, 1.0);
      const auto x = random_normal(rng, 1 + rng.below(64));
      const auto rec = ssm::ssm_recurrent(ssm::discretize_zoh(p, delta), p.c, p.d, x);
      const auto conv = ssm::ssm_convolutional(p, delta, x);
      for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(rec[i] - conv[i]));
    }
    return std::pair{worst <= 1e-10, fmt("max abs error %.3e over %.0f systems", worst, double(trials))};
  });
}

CheckResult check_scan_equivalence(std::size_t trials, std::uint64_t seed) {
  return timed("selective scan parallel == sequential", [=] {
    Rng rng(seed);
    double worst = 0.0;
    bool reproducible = true;
    for (std::size_t t = 0; t < trials; ++t) {
      const std::size_t len = 1 + rng.below(64), ch = 1 + rng.below(4), st = 1 + rng.below(8);
      const auto sel = random_selective(rng, len, ch, st);
      const auto x = random_normal(rng, len * ch);
      const auto seq = ssm::selective_scan_sequential(sel, x);
      const auto par = ssm::selective_scan_parallel(sel, x);
      for (std::size_t i = 0; i < seq.size(); ++i) worst = std::max(worst, std::abs(seq[i] - par[i]));
      for (std::size_t workers : {1, 2, 3, 4}) {
        const auto again = ssm::selective_scan_parallel(sel, x, {ssm::InputRule::kEuler, workers});
        reproducible = reproducible && same_bits(par, again);
      }
    }
    return std::pair{worst <= 1e-12 && reproducible,
                     fmt("max abs error %.3e, bit-identical across workers: ", worst) +
                         (reproducible ? "yes" : "no")};
  });
}

CheckResult check_stability(std::size_t trials, std::uint64_t seed) {
  return timed("discrete stability and state bound", [=] {
    Rng rng(seed);
    bool ok = true;
    double worst_ratio = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
      const auto p = random_lti(rng, 8);
      const double delta = rng.uniform(0.01, 1.0);
      const auto disc = ssm::discretize_zoh(p, delta);
      const auto x = random_normal(rng, 1 + rng.below(256));
      double max_a = 0.0, max_b = 0.0, max_x = 0.0;
      for (double a : disc.a_bar) {
        ok = ok && a > 0.0 && a < 1.0;
        max_a = std::max(max_a, a);
      }
      for (double b : disc.b_bar) max_b = std::max(max_b, std::abs(b));
      for (double v : x) max_x = std::max(max_x, std::abs(v));
      const double bound = max_b * max_x / (1.0 - max_a);
      for (std::size_t n = 0; n < p.state_size(); ++n) {
        std::vector<double> unit(p.state_size(), 0.0);
        unit[n] = 1.0;
        for (double h : ssm::ssm_recurrent(disc, unit, 0.0, x)) {
          worst_ratio = std::max(worst_ratio, std::abs(h) / bound);
        }
      }
    }
    ok = ok && worst_ratio <= 1.0 + 1e-12;
    return std::pair{ok, fmt("A_bar in (0,1), max |h| / bound = %.4f", worst_ratio)};
  });
}

CheckResult check_kernel_decay(std::size_t trials, std::uint64_t seed) {
  return timed("kernel decay |K[L-1]| < |K[0]|", [=] {
    Rng rng(seed);
    std::size_t failures = 0;
    for (std::size_t t = 0; t < trials; ++t) {
      auto p = random_lti(rng, 8);
      // Same-sign C_n B_n terms: otherwise K[0] can cancel to near zero.
      for (auto& b : p.b) b = std::abs(b) + 1e-3;
      for (auto& c : p.c) c = std::abs(c) + 1e-3;
      const auto k = ssm::ssm_kernel(p, rng.uniform(0.01, 1.0), 2 + rng.below(63));
      if (!(std::abs(k.back()) < std::abs(k.front()))) ++failures;
    }
    return std::pair{failures == 0, fmt("%.0f of %.0f systems violate", double(failures), double(trials))};
  });
}

CheckResult check_scan_gradient(std::uint64_t seed) {
  return timed("selective scan gradient vs finite differences", [=] {
    Rng rng(seed);
    const std::size_t len = 12, ch = 3, st = 4;
    const Tensor x = random_tensor(rng, {len, ch});
    scan2d::DirectionParams p = scan2d::init_direction_params(ch, st, rng);
    for (auto& v : p.w_delta.data_mut()) v *= 3.0;
    for (auto& v : p.d.data_mut()) v = rng.uniform(-1.0, 1.0);
    const Tensor weight = random_tensor(rng, {len, ch});
    double worst = 0.0;
    for (ScanMode mode : {ScanMode::kSequential, ScanMode::kParallel}) {
      auto loss = [&] { return sum(mul(scan2d::scan_sequence(x, p, mode), weight)); };
      const auto g = grad_check(loss, {p.w_delta, p.b_delta, p.w_b, p.w_c, p.a_log, p.d}, 60, seed + 1);
      worst = std::max(worst, g.max_rel_error);
    }
    return std::pair{worst <= 1e-5, fmt("max relative error %.3e", worst)};
  });
}

CheckResult check_model_gradient(std::uint64_t seed) {
  return timed("model gradient vs finite differences", [=] {
    ModelConfig config;
    config.channels = 8;
    config.groups = 1;
    config.blocks_per_group = 1;
    config.state_size = 4;
    config.ca_reduction = 4;
    config.task = Task::kSr2;
    ModelState params = init_model(config, seed);
    Rng rng(seed);
    const Tensor x = random_tensor(rng, {6, 6, 3}, 0.0, 1.0);
    const Tensor weight = random_tensor(rng, {12, 12, 3});
    std::vector<Tensor> leaves;
    for (auto& [name, t] : params) leaves.push_back(t);
    auto loss = [&] { return sum(mul(mambair_forward(x, params, config), weight)); };
    const auto g = grad_check(loss, leaves, 60, seed + 1);
    return std::pair{g.max_rel_error <= 1e-4, fmt("max relative error %.3e", g.max_rel_error)};
  });
}

CheckResult check_permutations() {
  return timed("scan orders are bijections", [] {
    bool ok = true;
    for (std::size_t h : {1, 2, 5}) {
      for (std::size_t w : {1, 3, 4}) {
        for (std::size_t d = 0; d < scan2d::kNumDirections; ++d) {
          const auto order = scan2d::scan_order(static_cast<scan2d::Direction>(d), h, w);
          const auto inv = scan2d::invert_permutation(order);
          for (std::size_t i = 0; i < order.size(); ++i) ok = ok && inv[order[i]] == i && order[inv[i]] == i;
          ok = ok && std::set<std::size_t>(order.begin(), order.end()).size() == h * w;
        }
      }
    }
    return std::pair{ok, std::string(ok ? "all orders invert exactly" : "a permutation is broken")};
  });
}

CheckResult check_dihedral_group() {
  return timed("dihedral codes form a group of order 8", [] {
    Rng rng(7);
    const Tensor img = random_tensor(rng, {3, 3, 1});
    std::vector<Tensor> images;
    for (int c = 0; c < kNumDihedral; ++c) images.push_back(augment(img, c));
    bool ok = same_bits(images[0].data(), img.data());
    for (int a = 0; a < kNumDihedral; ++a) {
      for (int b = a + 1; b < kNumDihedral; ++b) ok = ok && !same_bits(images[a].data(), images[b].data());
      ok = ok && same_bits(augment(images[a], inverse_code(a)).data(), img.data());
      for (int b = 0; b < kNumDihedral; ++b) {
        ok = ok && same_bits(augment(images[a], b).data(), images[compose_codes(a, b)].data());
      }
    }
    return std::pair{ok, std::string(ok ? "64 compositions verified" : "composition table mismatch")};
  });
}

CheckResult check_checkpoint_roundtrip() {
  return timed("checkpoint save/load/save is byte-identical", [] {
    ModelConfig config;
    config.channels = 8;
    config.groups = 1;
    config.blocks_per_group = 1;
    config.ca_reduction = 4;
    const ModelState params = init_model(config, 11);
    AdamState opt;
    opt.step = 3;
    for (const auto& [name, t] : params) {
      opt.m[name].assign(t.numel(), 0.25);
      opt.v[name].assign(t.numel(), 0.5);
    }
    const auto bytes = encode_checkpoint(params, opt);
    const Checkpoint back = decode_checkpoint(bytes);
    const bool same = encode_checkpoint(back.params, back.optimizer) == bytes;
    double worst = 0.0;
    for (const auto& [name, t] : params) {
      const auto& u = back.params.at(name);
      for (std::size_t i = 0; i < t.numel(); ++i) worst = std::max(worst, std::abs(t[i] - u[i]) / std::max(1.0, std::abs(t[i])));
    }
    const bool ok = same && worst <= 6e-8 && back.optimizer.step == 3;
    return std::pair{ok, fmt("byte-identical: %.0f, max rel change %.2e", same ? 1.0 : 0.0, worst)};
  });
}

CheckResult check_metric_symmetry() {
  return timed("PSNR and SSIM are symmetric", [] {
    Rng rng(8);
    double worst = 0.0;
    for (int t = 0; t < 10; ++t) {
      const Tensor a = random_tensor(rng, {16, 16, 3}, 0.0, 1.0);
      const Tensor b = random_tensor(rng, {16, 16, 3}, 0.0, 1.0);
      worst = std::max(worst, std::abs(psnr_y(a, b) - psnr_y(b, a)));
      worst = std::max(worst, std::abs(ssim_y(a, b) - ssim_y(b, a)));
    }
    return std::pair{worst <= 1e-12, fmt("max asymmetry %.3e", worst)};
  });
}

CheckResult check_charbonnier_limit() {
  return timed("Charbonnier converges to L1 as eps shrinks", [] {
    Rng rng(9);
    const Tensor a = random_tensor(rng, {8, 8, 3}), b = random_tensor(rng, {8, 8, 3});
    const double l1 = loss_l1(a, b).item();
    double prev = INFINITY;
    bool ok = true;
    std::string detail;
    for (double eps : {1e-3, 1e-6, 1e-9}) {
      const double gap = loss_charbonnier(a, b, eps).item() - l1;
      ok = ok && gap >= 0.0 && gap <= eps && gap <= prev;
      prev = gap;
      detail += fmt("eps %.0e gap %.2e; ", eps, gap);
    }
    return std::pair{ok, detail};
  });
}

CheckResult check_metric_sanity() {
  return timed("metric reference values", [] {
    const double p = psnr_from_mse(1.0);
    Rng rng(10);
    const Tensor x = random_tensor(rng, {12, 12, 3}, 0.0, 1.0);
    const double s = ssim_y(x, x);
    const double y = rgb_to_y(Tensor({1, 1, 3}, 1.0))[0];
    const bool ok = std::abs(p - 48.1308) <= 1e-3 && std::abs(s - 1.0) <= 1e-12 && std::abs(y - 235.0) <= 1e-3 &&
                    std::isinf(psnr_y(x, x));
    return std::pair{ok, fmt("PSNR(MSE 1) %.4f dB, white Y %.3f", p, y)};
  });
}

CheckResult check_attention_rows() {
  return timed("attention rows sum to one", [] {
    Rng rng(12);
    const Tensor q = random_tensor(rng, {20, 6}), k = random_tensor(rng, {20, 6});
    double worst = 0.0;
    for (std::size_t r = 0; r < 20; ++r) {
      double total = 0.0;
      for (double p : attention_row(q, k, r)) total += p;
      worst = std::max(worst, std::abs(total - 1.0));
    }
    return std::pair{worst <= 1e-12, fmt("max deviation %.3e", worst)};
  });
}

CheckResult check_global_erf() {
  return timed("2D-SSM model has a global receptive field", [] {
    ModelConfig config;
    const ModelState params = init_model(config, 0);
    const auto erf = diag::compute_erf(diag::bind_model(params, config), 16, 3, diag::ErfMode::kGray);
    const double low = *std::min_element(erf.raw.begin(), erf.raw.end());
    return std::pair{low > 1e-12, fmt("min magnitude %.3e over 256 positions", low)};
  });
}

CheckResult check_training_determinism() {
  return timed("training is deterministic across runs and workers", [] {
    RunConfig config;
    config.model.channels = 8;
    config.model.groups = 1;
    config.model.blocks_per_group = 1;
    config.model.ca_reduction = 4;
    config.train.batch_size = 3;
    config.train.total_steps = 2;
    config.train.eval_every = 0;
    config.train.patch_size = 8;
    const Dataset data = synthetic_dataset(4, 0, 12, 3, 0);
    std::vector<std::vector<unsigned char>> runs;
    for (std::size_t workers : {1, 1, 3}) {
      config.train.workers = workers;
      const auto r = train(config, data);
      runs.push_back(encode_checkpoint(r.params, r.optimizer));
    }
    const bool ok = runs[0] == runs[1] && runs[0] == runs[2];
    return std::pair{ok, std::string(ok ? "checkpoints byte-identical" : "checkpoints differ")};
  });
}

std::vector<CheckResult> run_all(std::ostream* out) {
  const std::vector<std::function<CheckResult()>> checks = {
      [] { return check_form_equivalence(); },   [] { return check_scan_equivalence(); },
      [] { return check_stability(); },          [] { return check_kernel_decay(); },
      [] { return check_scan_gradient(); },      [] { return check_model_gradient(); },
      [] { return check_permutations(); },       [] { return check_dihedral_group(); },
      [] { return check_checkpoint_roundtrip(); }, [] { return check_metric_symmetry(); },
      [] { return check_charbonnier_limit(); },  [] { return check_metric_sanity(); },
      [] { return check_attention_rows(); },     [] { return check_global_erf(); },
      [] { return check_training_determinism(); },
  };
  std::vector<CheckResult> results;
  for (const auto& c : checks) {
    results.push_back(c());
    if (out) *out << format_result(results.back()) << '\n' << std::flush;
  }
  return results;
}

}  // namespace mambair::selftest
