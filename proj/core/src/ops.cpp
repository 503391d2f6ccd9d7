#include "mambair/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mambair/errors.hpp"

namespace mambair {

namespace {

using NodePtr = std::shared_ptr<detail::Node>;

// Gradient buffer of an input, or null when the input is not tracked.
double* grad_of(const NodePtr& n) {
  return (n && n->requires_grad) ? n->ensure_grad().data() : nullptr;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::size_t last_dim(const Tensor& x, const char* op) {
  if (x.rank() == 0) throw ShapeError(std::string(op) + ": needs rank >= 1");
  return x.shape().back();
}

void require_hwc(const Tensor& x, const char* op) {
  if (x.rank() != 3) {
    throw ShapeError(std::string(op) + ": expected [H,W,C], got " + shape_str(x.shape()));
  }
}

template <class F, class D>
Tensor unary(const Tensor& x, F f, D dfdx) {
  Tensor out(x.shape());
  auto xs = x.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < xs.size(); ++i) os[i] = f(xs[i]);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node(), on = out.node().get(), dfdx](std::span<const double> g) {
      double* gx = grad_of(xn);
      if (!gx) return;
      const auto& xv = xn->value;
      const auto& ov = on->value;
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * dfdx(xv[i], ov[i]);
    });
  }
  return out;
}

// [rows, cols] -> [cols, rows].
std::vector<double> transpose(const double* m, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = m[r * cols + c];
  return t;
}

}  // namespace

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double softplus_inverse(double y) {
  if (y <= 0) throw std::domain_error("softplus_inverse needs y > 0");
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] + bs[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] - bs[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  auto as = a.data(), bs = b.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * bs[i];
  if (Tape* tape = recording_tape({&a, &b})) {
    tape->record(out, [an = a.node(), bn = b.node()](std::span<const double> g) {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->value[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->value[i];
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double k) {
  Tensor out(a.shape());
  auto as = a.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = as[i] * k;
  if (Tape* tape = recording_tape({&a})) {
    tape->record(out, [an = a.node(), k](std::span<const double> g) {
      if (double* ga = grad_of(an))
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * k;
    });
  }
  return out;
}

Tensor mul_channel(const Tensor& x, const Tensor& s) {
  const std::size_t c = last_dim(x, "mul_channel");
  if (s.numel() != c) {
    throw ShapeError("mul_channel: " + shape_str(s.shape()) + " against " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  auto xs = x.data(), ss = s.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] * ss[i % c];
  if (Tape* tape = recording_tape({&x, &s})) {
    tape->record(out, [xn = x.node(), sn = s.node(), c](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * sn->value[i % c];
      if (double* gs = grad_of(sn))
        for (std::size_t i = 0; i < g.size(); ++i) gs[i % c] += g[i] * xn->value[i];
    });
  }
  return out;
}

Tensor add_channel(const Tensor& x, const Tensor& b) {
  const std::size_t c = last_dim(x, "add_channel");
  if (b.numel() != c) {
    throw ShapeError("add_channel: " + shape_str(b.shape()) + " against " + shape_str(x.shape()));
  }
  Tensor out(x.shape());
  auto xs = x.data(), bs = b.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < os.size(); ++i) os[i] = xs[i] + bs[i % c];
  if (Tape* tape = recording_tape({&x, &b})) {
    tape->record(out, [xn = x.node(), bn = b.node(), c](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      if (double* gb = grad_of(bn))
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % c] += g[i];
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  Tensor out = Tensor::scalar(acc);
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node()](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < xn->value.size(); ++i) gx[i] += g[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  Tensor out(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node()](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t cin = last_dim(x, "linear");
  if (w.rank() != 2 || w.dim(0) != cin) {
    throw ShapeError("linear: weight " + shape_str(w.shape()) + " against input " +
                     shape_str(x.shape()));
  }
  const std::size_t cout = w.dim(1);
  if (bias.defined() && bias.numel() != cout) {
    throw ShapeError("linear: bias " + shape_str(bias.shape()) + " for " + std::to_string(cout) +
                     " outputs");
  }
  const std::size_t rows = x.numel() / cin;
  Shape out_shape = x.shape();
  out_shape.back() = cout;
  Tensor out(out_shape);
  const double* xp = x.data().data();
  const double* wp = w.data().data();
  double* op = out.data_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double* orow = op + r * cout;
    if (bias.defined()) {
      for (std::size_t o = 0; o < cout; ++o) orow[o] = bias[o];
    }
    const double* xrow = xp + r * cin;
    for (std::size_t i = 0; i < cin; ++i) {
      const double xv = xrow[i];
      const double* wrow = wp + i * cout;
      for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
    }
  }
  if (Tape* tape = recording_tape({&x, &w, &bias})) {
    tape->record(out, [xn = x.node(), wn = w.node(), bn = bias.node(), rows, cin,
                       cout](std::span<const double> g) {
      double* gx = grad_of(xn);
      double* gw = grad_of(wn);
      double* gb = grad_of(bn);
      const double* xv = xn->value.data();
      const std::vector<double> wt = gx ? transpose(wn->value.data(), cin, cout) : std::vector<double>{};
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * cout;
        if (gb)
          for (std::size_t o = 0; o < cout; ++o) gb[o] += grow[o];
        if (gx) {
          double* gxrow = gx + r * cin;
          for (std::size_t o = 0; o < cout; ++o) {
            const double go = grow[o];
            const double* wtrow = wt.data() + o * cin;
            for (std::size_t i = 0; i < cin; ++i) gxrow[i] += go * wtrow[i];
          }
        }
        if (gw) {
          const double* xrow = xv + r * cin;
          for (std::size_t i = 0; i < cin; ++i) {
            const double xval = xrow[i];
            double* gwrow = gw + i * cout;
            for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xval * grow[o];
          }
        }
      }
    });
  }
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t padding) {
  require_hwc(input, "conv2d");
  if (weight.rank() != 4 || weight.dim(0) != weight.dim(1)) {
    throw ShapeError("conv2d: weight must be [k,k,Cin,Cout], got " + shape_str(weight.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), cin = input.dim(2);
  const std::size_t k = weight.dim(0), cout = weight.dim(3);
  if (weight.dim(2) != cin) {
    throw ShapeError("conv2d: input has " + std::to_string(cin) + " channels, weight expects " +
                     std::to_string(weight.dim(2)));
  }
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd");
  if (bias.defined() && bias.numel() != cout) throw ShapeError("conv2d: bias size mismatch");
  if (2 * padding + 1 < k) throw ShapeError("conv2d: padding too small for kernel");
  const std::size_t oh = h + 2 * padding - k + 1;
  const std::size_t ow = w + 2 * padding - k + 1;
  Tensor out({oh, ow, cout});
  const double* xp = input.data().data();
  const double* wp = weight.data().data();
  double* op = out.data_mut().data();
  const auto pad = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t y = 0; y < oh; ++y) {
    for (std::size_t x = 0; x < ow; ++x) {
      double* orow = op + (y * ow + x) * cout;
      if (bias.defined())
        for (std::size_t o = 0; o < cout; ++o) orow[o] = bias[o];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xrow = xp + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
          const double* wtap = wp + (ky * k + kx) * cin * cout;
          for (std::size_t i = 0; i < cin; ++i) {
            const double xv = xrow[i];
            const double* wrow = wtap + i * cout;
            for (std::size_t o = 0; o < cout; ++o) orow[o] += xv * wrow[o];
          }
        }
      }
    }
  }
  if (Tape* tape = recording_tape({&input, &weight, &bias})) {
    tape->record(out, [xn = input.node(), wn = weight.node(), bn = bias.node(), h, w, cin, cout, k,
                       oh, ow, pad](std::span<const double> g) {
      double* gx = grad_of(xn);
      double* gw = grad_of(wn);
      double* gb = grad_of(bn);
      const double* xv = xn->value.data();
      // Per-tap transposed weights [k*k][Cout][Cin] for the input gradient.
      std::vector<double> wt;
      if (gx) {
        wt.resize(k * k * cin * cout);
        for (std::size_t t = 0; t < k * k; ++t) {
          const auto tap = transpose(wn->value.data() + t * cin * cout, cin, cout);
          std::copy(tap.begin(), tap.end(), wt.begin() + static_cast<std::ptrdiff_t>(t * cin * cout));
        }
      }
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const double* grow = g.data() + (y * ow + x) * cout;
          if (gb)
            for (std::size_t o = 0; o < cout; ++o) gb[o] += grow[o];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t xoff =
                  (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * cin;
              const std::size_t woff = (ky * k + kx) * cin * cout;
              if (gx) {
                double* gxrow = gx + xoff;
                for (std::size_t o = 0; o < cout; ++o) {
                  const double go = grow[o];
                  const double* wtrow = wt.data() + woff + o * cin;
                  for (std::size_t i = 0; i < cin; ++i) gxrow[i] += go * wtrow[i];
                }
              }
              if (gw) {
                for (std::size_t i = 0; i < cin; ++i) {
                  const double xval = xv[xoff + i];
                  double* gwrow = gw + woff + i * cout;
                  for (std::size_t o = 0; o < cout; ++o) gwrow[o] += xval * grow[o];
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor depthwise_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_hwc(input, "depthwise_conv2d");
  if (weight.rank() != 3 || weight.dim(0) != weight.dim(1)) {
    throw ShapeError("depthwise_conv2d: weight must be [k,k,C], got " + shape_str(weight.shape()));
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  const std::size_t k = weight.dim(0);
  if (weight.dim(2) != c) {
    throw ShapeError("depthwise_conv2d: input has " + std::to_string(c) +
                     " channels, weight expects " + std::to_string(weight.dim(2)));
  }
  if (k % 2 == 0) throw ShapeError("depthwise_conv2d: kernel size must be odd");
  if (bias.defined() && bias.numel() != c) throw ShapeError("depthwise_conv2d: bias size mismatch");
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  Tensor out({h, w, c});
  const double* xp = input.data().data();
  const double* wp = weight.data().data();
  double* op = out.data_mut().data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double* orow = op + (y * w + x) * c;
      if (bias.defined())
        for (std::size_t ch = 0; ch < c; ++ch) orow[ch] = bias[ch];
      for (std::size_t ky = 0; ky < k; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
        for (std::size_t kx = 0; kx < k; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
          const double* xrow = xp + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
          const double* wrow = wp + (ky * k + kx) * c;
          for (std::size_t ch = 0; ch < c; ++ch) orow[ch] += xrow[ch] * wrow[ch];
        }
      }
    }
  }
  if (Tape* tape = recording_tape({&input, &weight, &bias})) {
    tape->record(out, [xn = input.node(), wn = weight.node(), bn = bias.node(), h, w, c, k,
                       pad](std::span<const double> g) {
      double* gx = grad_of(xn);
      double* gw = grad_of(wn);
      double* gb = grad_of(bn);
      const double* xv = xn->value.data();
      const double* wv = wn->value.data();
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const double* grow = g.data() + (y * w + x) * c;
          if (gb)
            for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += grow[ch];
          for (std::size_t ky = 0; ky < k; ++ky) {
            const auto iy = static_cast<std::ptrdiff_t>(y + ky) - pad;
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t kx = 0; kx < k; ++kx) {
              const auto ix = static_cast<std::ptrdiff_t>(x + kx) - pad;
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
              const std::size_t xoff =
                  (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c;
              const std::size_t woff = (ky * k + kx) * c;
              if (gx)
                for (std::size_t ch = 0; ch < c; ++ch) gx[xoff + ch] += grow[ch] * wv[woff + ch];
              if (gw)
                for (std::size_t ch = 0; ch < c; ++ch) gw[woff + ch] += grow[ch] * xv[xoff + ch];
            }
          }
        }
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t c = last_dim(x, "layer_norm");
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("layer_norm: affine parameters must have " + std::to_string(c) + " entries");
  }
  if (!(eps > 0)) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / c;
  Tensor out(x.shape());
  // Saved for the backward pass: normalized values and 1/sigma per row.
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  const double* xp = x.data().data();
  double* op = out.data_mut().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xp + r * c;
    double mu = 0.0;
    for (std::size_t i = 0; i < c; ++i) mu += xr[i];
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (std::size_t i = 0; i < c; ++i) var += (xr[i] - mu) * (xr[i] - mu);
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t i = 0; i < c; ++i) {
      const double nh = (xr[i] - mu) * is;
      (*xhat)[r * c + i] = nh;
      op[r * c + i] = nh * gamma[i] + beta[i];
    }
  }
  if (Tape* tape = recording_tape({&x, &gamma, &beta})) {
    tape->record(out, [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat, inv_std, rows,
                       c](std::span<const double> g) {
      double* gx = grad_of(xn);
      double* gg = grad_of(gn);
      double* gb = grad_of(bn);
      const auto& gam = gn->value;
      const double inv_c = 1.0 / static_cast<double>(c);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* grow = g.data() + r * c;
        const double* nh = xhat->data() + r * c;
        if (gg)
          for (std::size_t i = 0; i < c; ++i) gg[i] += grow[i] * nh[i];
        if (gb)
          for (std::size_t i = 0; i < c; ++i) gb[i] += grow[i];
        if (gx) {
          double m1 = 0.0, m2 = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            const double gh = grow[i] * gam[i];
            m1 += gh;
            m2 += gh * nh[i];
          }
          m1 *= inv_c;
          m2 *= inv_c;
          const double is = (*inv_std)[r];
          for (std::size_t i = 0; i < c; ++i) {
            gx[r * c + i] += is * (grow[i] * gam[i] - m1 - nh[i] * m2);
          }
        }
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary(x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

Tensor silu(const Tensor& x) {
  return unary(
      x, [](double v) { return v * sigmoid_value(v); },
      [](double v, double) {
        const double s = sigmoid_value(v);
        return s * (1.0 + v * (1.0 - s));
      });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0 ? v : 0.0; },
      [](double v, double) { return v > 0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& x) {
  return unary(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * v * v) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;
        return cdf + v * pdf;
      });
}

Tensor softplus(const Tensor& x) {
  return unary(x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

Tensor global_avg_pool(const Tensor& x) {
  require_hwc(x, "global_avg_pool");
  const std::size_t c = x.dim(2);
  const std::size_t n = x.dim(0) * x.dim(1);
  if (n == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out({c});
  auto os = out.data_mut();
  auto xs = x.data();
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t ch = 0; ch < c; ++ch) os[ch] += xs[p * c + ch];
  const double inv = 1.0 / static_cast<double>(n);
  for (auto& v : os) v *= inv;
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node(), n, c, inv](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t p = 0; p < n; ++p)
          for (std::size_t ch = 0; ch < c; ++ch) gx[p * c + ch] += g[ch] * inv;
    });
  }
  return out;
}

namespace {

// Index map for depth-to-space: dst[i] = src[map[i]] with the shuffled layout
// as destination.
std::vector<std::size_t> shuffle_map(std::size_t h, std::size_t w, std::size_t c, std::size_t r) {
  const std::size_t in_c = c * r * r;
  std::vector<std::size_t> map(h * w * in_c);
  const std::size_t ow = w * r;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < r; ++j) {
            const std::size_t dst = ((y * r + i) * ow + (x * r + j)) * c + ch;
            const std::size_t src = (y * w + x) * in_c + ch * r * r + i * r + j;
            map[dst] = src;
          }
  return map;
}

Tensor permute_values(const Tensor& x, Shape out_shape, std::vector<std::size_t> map,
                      bool map_is_dst_to_src) {
  Tensor out(std::move(out_shape));
  auto xs = x.data();
  auto os = out.data_mut();
  if (map_is_dst_to_src) {
    for (std::size_t i = 0; i < map.size(); ++i) os[i] = xs[map[i]];
  } else {
    for (std::size_t i = 0; i < map.size(); ++i) os[map[i]] = xs[i];
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node(), map = std::move(map),
                       map_is_dst_to_src](std::span<const double> g) {
      double* gx = grad_of(xn);
      if (!gx) return;
      if (map_is_dst_to_src) {
        for (std::size_t i = 0; i < map.size(); ++i) gx[map[i]] += g[i];
      } else {
        for (std::size_t i = 0; i < map.size(); ++i) gx[i] += g[map[i]];
      }
    });
  }
  return out;
}

}  // namespace

Tensor pixel_shuffle(const Tensor& x, std::size_t r) {
  require_hwc(x, "pixel_shuffle");
  if (r == 0 || x.dim(2) % (r * r) != 0) {
    throw ShapeError("pixel_shuffle: channels " + std::to_string(x.dim(2)) +
                     " not divisible by r^2 = " + std::to_string(r * r));
  }
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2) / (r * r);
  return permute_values(x, {h * r, w * r, c}, shuffle_map(h, w, c, r), true);
}

Tensor pixel_unshuffle(const Tensor& x, std::size_t r) {
  require_hwc(x, "pixel_unshuffle");
  if (r == 0 || x.dim(0) % r != 0 || x.dim(1) % r != 0) {
    throw ShapeError("pixel_unshuffle: spatial size not divisible by " + std::to_string(r));
  }
  const std::size_t h = x.dim(0) / r, w = x.dim(1) / r, c = x.dim(2);
  return permute_values(x, {h, w, c * r * r}, shuffle_map(h, w, c, r), false);
}

namespace {

struct Tap {
  std::size_t lo, hi;
  double t;
};

// Source taps along one axis for every output coordinate.
std::vector<Tap> bilinear_taps(std::size_t n, std::size_t scale) {
  std::vector<Tap> taps(n * scale);
  for (std::size_t o = 0; o < taps.size(); ++o) {
    double pos = (static_cast<double>(o) + 0.5) / static_cast<double>(scale) - 0.5;
    pos = std::clamp(pos, 0.0, static_cast<double>(n - 1));
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    taps[o] = {lo, std::min(lo + 1, n - 1), pos - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, std::size_t scale) {
  require_hwc(x, "upsample_bilinear");
  if (scale == 0) throw ShapeError("upsample_bilinear: scale must be positive");
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t oh = h * scale, ow = w * scale;
  auto ty = bilinear_taps(h, scale), tx = bilinear_taps(w, scale);
  Tensor out({oh, ow, c});
  auto src = x.data();
  auto dst = out.data_mut();
  for (std::size_t i = 0; i < oh; ++i) {
    const Tap& yt = ty[i];
    for (std::size_t j = 0; j < ow; ++j) {
      const Tap& xt = tx[j];
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double a = src[(yt.lo * w + xt.lo) * c + ch], b = src[(yt.lo * w + xt.hi) * c + ch];
        const double d = src[(yt.hi * w + xt.lo) * c + ch], e = src[(yt.hi * w + xt.hi) * c + ch];
        const double top = a + (b - a) * xt.t, bottom = d + (e - d) * xt.t;
        dst[(i * ow + j) * c + ch] = top + (bottom - top) * yt.t;
      }
    }
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node(), ty = std::move(ty), tx = std::move(tx), w, c](std::span<const double> g) {
      double* gx = grad_of(xn);
      if (!gx) return;
      const std::size_t ow = tx.size();
      for (std::size_t i = 0; i < ty.size(); ++i) {
        const Tap& yt = ty[i];
        for (std::size_t j = 0; j < ow; ++j) {
          const Tap& xt = tx[j];
          const double w00 = (1 - yt.t) * (1 - xt.t), w01 = (1 - yt.t) * xt.t;
          const double w10 = yt.t * (1 - xt.t), w11 = yt.t * xt.t;
          for (std::size_t ch = 0; ch < c; ++ch) {
            const double gv = g[(i * ow + j) * c + ch];
            gx[(yt.lo * w + xt.lo) * c + ch] += w00 * gv;
            gx[(yt.lo * w + xt.hi) * c + ch] += w01 * gv;
            gx[(yt.hi * w + xt.lo) * c + ch] += w10 * gv;
            gx[(yt.hi * w + xt.hi) * c + ch] += w11 * gv;
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected [L,C], got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), c = x.dim(1);
  Tensor out({index.size(), c});
  auto xs = x.data();
  auto os = out.data_mut();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= rows) throw ShapeError("gather_rows: index out of range");
    for (std::size_t ch = 0; ch < c; ++ch) os[i * c + ch] = xs[index[i] * c + ch];
  }
  if (Tape* tape = recording_tape({&x})) {
    tape->record(out, [xn = x.node(), idx = std::vector<std::size_t>(index.begin(), index.end()),
                       c](std::span<const double> g) {
      if (double* gx = grad_of(xn))
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t ch = 0; ch < c; ++ch) gx[idx[i] * c + ch] += g[i * c + ch];
    });
  }
  return out;
}

}  // namespace mambair
