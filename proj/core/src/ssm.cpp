#include "mambair/ssm.hpp"

#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>

#include "mambair/errors.hpp"
#include "mambair/ops.hpp"

namespace mambair::ssm {

void LtiParams::validate() const {
  if (a.empty()) throw std::invalid_argument("LtiParams: state size must be >= 1");
  if (b.size() != a.size() || c.size() != a.size()) {
    throw ShapeError("LtiParams: A, B, C must share the state size");
  }
  for (double v : a) {
    if (!(v < 0.0)) throw std::invalid_argument("LtiParams: diagonal of A must be negative");
  }
}

LtiParams LtiParams::from_log(std::span<const double> a_log, std::vector<double> b,
                              std::vector<double> c, double d) {
  LtiParams p;
  p.a.reserve(a_log.size());
  for (double v : a_log) p.a.push_back(-std::exp(v));
  p.b = std::move(b);
  p.c = std::move(c);
  p.d = d;
  p.validate();
  return p;
}

double zoh_a(double a, double delta) { return std::exp(delta * a); }

double zoh_b(double a, double b, double delta) {
  const double x = delta * a;
  if (std::abs(x) < kZohSeriesThreshold) return delta * b;
  return std::expm1(x) / a * b;
}

DiscreteParams discretize_zoh(const LtiParams& params, double delta) {
  if (!(delta > 0.0)) throw std::invalid_argument("discretize_zoh: delta must be positive");
  if (params.b.size() != params.a.size()) throw ShapeError("discretize_zoh: B size mismatch");
  DiscreteParams out;
  out.delta = delta;
  out.a_bar.resize(params.a.size());
  out.b_bar.resize(params.a.size());
  for (std::size_t n = 0; n < params.a.size(); ++n) {
    out.a_bar[n] = zoh_a(params.a[n], delta);
    out.b_bar[n] = zoh_b(params.a[n], params.b[n], delta);
  }
  return out;
}

std::vector<double> ssm_recurrent(const DiscreteParams& disc, std::span<const double> c, double d,
                                  std::span<const double> x, std::span<const double> h0) {
  const std::size_t n = disc.a_bar.size();
  if (disc.b_bar.size() != n || c.size() != n) {
    throw ShapeError("ssm_recurrent: parameter sizes disagree");
  }
  if (!h0.empty() && h0.size() != n) throw ShapeError("ssm_recurrent: h0 size mismatch");
  std::vector<double> h(n, 0.0);
  if (!h0.empty()) h.assign(h0.begin(), h0.end());
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      h[i] = disc.a_bar[i] * h[i] + disc.b_bar[i] * x[k];
      acc += c[i] * h[i];
    }
    y[k] = acc + d * x[k];
  }
  return y;
}

std::vector<double> ssm_kernel(const LtiParams& params, double delta, std::size_t length) {
  params.validate();
  const DiscreteParams disc = discretize_zoh(params, delta);
  const std::size_t n = params.state_size();
  std::vector<double> power(disc.b_bar);  // A_bar^i B_bar
  std::vector<double> kernel(length);
  for (std::size_t i = 0; i < length; ++i) {
    double acc = 0.0;
    for (std::size_t s = 0; s < n; ++s) acc += params.c[s] * power[s];
    kernel[i] = acc;
    for (std::size_t s = 0; s < n; ++s) power[s] *= disc.a_bar[s];
  }
  return kernel;
}

std::vector<double> ssm_convolutional(const LtiParams& params, double delta,
                                      std::span<const double> x) {
  const std::vector<double> kernel = ssm_kernel(params, delta, x.size());
  std::vector<double> y(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    double acc = 0.0;
    for (std::size_t j = 0; j <= k; ++j) acc += kernel[k - j] * x[j];
    y[k] = acc + params.d * x[k];
  }
  return y;
}

void SelectiveParams::validate() const {
  if (state == 0 || channels == 0) throw std::invalid_argument("SelectiveParams: empty dimensions");
  if (a_log.size() != channels * state) throw ShapeError("SelectiveParams: a_log must be [D,N]");
  if (delta.size() != length * channels) throw ShapeError("SelectiveParams: delta must be [L,D]");
  if (b.size() != length * state || c.size() != length * state) {
    throw ShapeError("SelectiveParams: B and C must be [L,N]");
  }
  if (d.size() != channels) throw ShapeError("SelectiveParams: D must be [D]");
}

double SelectiveParams::a(std::size_t ch, std::size_t n) const {
  return -std::exp(a_log[ch * state + n]);
}

TokenParams selective_project(const SelectiveProjection& proj, std::span<const double> token) {
  const std::size_t dch = proj.channels, ns = proj.state;
  if (token.size() != dch) throw ShapeError("selective_project: token width mismatch");
  TokenParams out;
  out.delta.assign(proj.b_delta.begin(), proj.b_delta.end());
  out.b.assign(ns, 0.0);
  out.c.assign(ns, 0.0);
  for (std::size_t i = 0; i < dch; ++i) {
    const double v = token[i];
    for (std::size_t o = 0; o < dch; ++o) out.delta[o] += v * proj.w_delta[i * dch + o];
    for (std::size_t o = 0; o < ns; ++o) {
      out.b[o] += v * proj.w_b[i * ns + o];
      out.c[o] += v * proj.w_c[i * ns + o];
    }
  }
  for (auto& v : out.delta) v = softplus_value(v);
  return out;
}

SelectiveParams selective_project_sequence(const SelectiveProjection& proj,
                                           std::span<const double> x, std::span<const double> a_log,
                                           std::span<const double> d) {
  const std::size_t dch = proj.channels, ns = proj.state;
  if (dch == 0 || x.size() % dch != 0) throw ShapeError("selective_project_sequence: bad input");
  SelectiveParams sel;
  sel.length = x.size() / dch;
  sel.channels = dch;
  sel.state = ns;
  sel.a_log.assign(a_log.begin(), a_log.end());
  sel.d.assign(d.begin(), d.end());
  sel.delta.reserve(sel.length * dch);
  sel.b.reserve(sel.length * ns);
  sel.c.reserve(sel.length * ns);
  for (std::size_t k = 0; k < sel.length; ++k) {
    TokenParams t = selective_project(proj, x.subspan(k * dch, dch));
    sel.delta.insert(sel.delta.end(), t.delta.begin(), t.delta.end());
    sel.b.insert(sel.b.end(), t.b.begin(), t.b.end());
    sel.c.insert(sel.c.end(), t.c.begin(), t.c.end());
  }
  sel.validate();
  return sel;
}

namespace {

void check_scan_input(const SelectiveParams& sel, std::span<const double> x) {
  sel.validate();
  if (x.size() != sel.length * sel.channels) {
    throw ShapeError("selective scan: input has " + std::to_string(x.size()) + " values, expected " +
                     std::to_string(sel.length * sel.channels));
  }
}

double input_gain(const SelectiveParams& sel, InputRule rule, std::size_t k, std::size_t ch,
                  std::size_t n) {
  const double dt = sel.delta[k * sel.channels + ch];
  const double bn = sel.b[k * sel.state + n];
  if (rule == InputRule::kExactZoh) return zoh_b(sel.a(ch, n), bn, dt);
  return dt * bn;
}

// y[k,ch] = sum_n C[k,n] h[k,ch,n] + D[ch] x[k,ch], summed in a fixed order.
std::vector<double> readout(const SelectiveParams& sel, std::span<const double> x,
                            const std::vector<double>& states) {
  const std::size_t dch = sel.channels, ns = sel.state;
  std::vector<double> y(sel.length * dch);
  for (std::size_t k = 0; k < sel.length; ++k) {
    const double* ck = sel.c.data() + k * ns;
    for (std::size_t ch = 0; ch < dch; ++ch) {
      const double* h = states.data() + (k * dch + ch) * ns;
      double acc = 0.0;
      for (std::size_t n = 0; n < ns; ++n) acc += ck[n] * h[n];
      y[k * dch + ch] = acc + sel.d[ch] * x[k * dch + ch];
    }
  }
  return y;
}

}  // namespace

std::vector<double> selective_scan_sequential(const SelectiveParams& sel, std::span<const double> x,
                                              const ScanOptions& opts, std::vector<double>* states,
                                              std::vector<double>* decays) {
  check_scan_input(sel, x);
  const std::size_t dch = sel.channels, ns = sel.state;
  std::vector<double> local;
  std::vector<double>& hs = states ? *states : local;
  hs.assign(sel.length * dch * ns, 0.0);
  if (decays) decays->assign(sel.length * dch * ns, 0.0);
  std::vector<double> a(dch * ns);
  for (std::size_t ch = 0; ch < dch; ++ch)
    for (std::size_t n = 0; n < ns; ++n) a[ch * ns + n] = sel.a(ch, n);
  std::vector<double> abar(ns), gain(ns);
  for (std::size_t k = 0; k < sel.length; ++k) {
    const double* bk = sel.b.data() + k * ns;
    for (std::size_t ch = 0; ch < dch; ++ch) {
      const double dt = sel.delta[k * dch + ch];
      const double xv = x[k * dch + ch];
      const double* ach = a.data() + ch * ns;
      for (std::size_t n = 0; n < ns; ++n) abar[n] = std::exp(dt * ach[n]);
      if (opts.rule == InputRule::kExactZoh) {
        for (std::size_t n = 0; n < ns; ++n) gain[n] = zoh_b(ach[n], bk[n], dt);
      } else {
        for (std::size_t n = 0; n < ns; ++n) gain[n] = dt * bk[n];
      }
      double* h = hs.data() + (k * dch + ch) * ns;
      if (k == 0) {
        for (std::size_t n = 0; n < ns; ++n) h[n] = gain[n] * xv;
      } else {
        const double* hprev = h - dch * ns;
        for (std::size_t n = 0; n < ns; ++n) h[n] = abar[n] * hprev[n] + gain[n] * xv;
      }
      if (decays) std::copy(abar.begin(), abar.end(), decays->begin() + static_cast<std::ptrdiff_t>((k * dch + ch) * ns));
    }
  }
  return readout(sel, x, hs);
}

void inclusive_scan(std::span<ScanElement> elems) {
  const std::size_t len = elems.size();
  if (len <= 1) return;
  const std::size_t n = std::bit_ceil(len);
  std::vector<ScanElement> tree(n);
  for (std::size_t i = 0; i < len; ++i) tree[i] = elems[i];
  // Up-sweep: tree[i] becomes the composition of its subtree.
  for (std::size_t stride = 1; stride < n; stride *= 2) {
    for (std::size_t i = 2 * stride - 1; i < n; i += 2 * stride) {
      tree[i] = compose(tree[i - stride], tree[i]);
    }
  }
  // Down-sweep to the exclusive prefix.
  tree[n - 1] = ScanElement{};
  for (std::size_t stride = n / 2; stride >= 1; stride /= 2) {
    for (std::size_t i = 2 * stride - 1; i < n; i += 2 * stride) {
      const ScanElement left = tree[i - stride];
      tree[i - stride] = tree[i];
      tree[i] = compose(tree[i], left);
    }
  }
  for (std::size_t i = 0; i < len; ++i) elems[i] = compose(tree[i], elems[i]);
}

std::vector<double> selective_scan_parallel(const SelectiveParams& sel, std::span<const double> x,
                                            const ScanOptions& opts, std::vector<double>* states,
                                            std::vector<double>* decays) {
  check_scan_input(sel, x);
  const std::size_t dch = sel.channels, ns = sel.state, len = sel.length;
  std::vector<double> local;
  std::vector<double>& hs = states ? *states : local;
  hs.assign(len * dch * ns, 0.0);
  if (decays) decays->assign(len * dch * ns, 0.0);

  // Each (channel, state) lane is an independent scan; workers take whole
  // lanes so the arithmetic per lane never depends on the worker count.
  const std::size_t lanes = dch * ns;
  auto run_lanes = [&](std::size_t first, std::size_t last) {
    std::vector<ScanElement> seq(len);
    for (std::size_t lane = first; lane < last; ++lane) {
      const std::size_t ch = lane / ns, n = lane % ns;
      const double a = sel.a(ch, n);
      for (std::size_t k = 0; k < len; ++k) {
        const double dt = sel.delta[k * dch + ch];
        seq[k] = {std::exp(dt * a), input_gain(sel, opts.rule, k, ch, n) * x[k * dch + ch]};
        if (decays) (*decays)[(k * dch + ch) * ns + n] = seq[k].a;
      }
      inclusive_scan(seq);
      for (std::size_t k = 0; k < len; ++k) hs[(k * dch + ch) * ns + n] = seq[k].b;
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.workers, lanes));
  if (workers == 1) {
    run_lanes(0, lanes);
  } else {
    std::vector<std::jthread> pool;
    const std::size_t per = (lanes + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t first = w * per, last = std::min(lanes, first + per);
      if (first >= last) break;
      pool.emplace_back(run_lanes, first, last);
    }
  }
  return readout(sel, x, hs);
}

}  // namespace mambair::ssm
