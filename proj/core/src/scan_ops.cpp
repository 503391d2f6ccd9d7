#include "mambair/scan_ops.hpp"

#include <cmath>
#include <memory>

#include "mambair/errors.hpp"
#include "mambair/ssm.hpp"

namespace mambair {

Tensor selective_scan(const Tensor& x, const Tensor& delta, const Tensor& a_log, const Tensor& b,
                      const Tensor& c, const Tensor& d, ScanMode mode) {
  if (x.rank() != 2 || a_log.rank() != 2) {
    throw ShapeError("selective_scan: x must be [L,D] and a_log [D,N]");
  }
  const std::size_t len = x.dim(0), dch = x.dim(1), ns = a_log.dim(1);
  if (delta.shape() != x.shape() || a_log.dim(0) != dch || b.shape() != Shape{len, ns} ||
      c.shape() != Shape{len, ns} || d.numel() != dch) {
    throw ShapeError("selective_scan: parameter shapes disagree with x " + shape_str(x.shape()));
  }

  ssm::SelectiveParams sel;
  sel.length = len;
  sel.channels = dch;
  sel.state = ns;
  sel.a_log.assign(a_log.data().begin(), a_log.data().end());
  sel.delta.assign(delta.data().begin(), delta.data().end());
  sel.b.assign(b.data().begin(), b.data().end());
  sel.c.assign(c.data().begin(), c.data().end());
  sel.d.assign(d.data().begin(), d.data().end());

  Tape* tape = recording_tape({&x, &delta, &a_log, &b, &c, &d});
  auto states = std::make_shared<std::vector<double>>();
  auto decays = std::make_shared<std::vector<double>>();
  std::vector<double>* keep_decays = tape ? decays.get() : nullptr;
  std::vector<double> y =
      mode == ScanMode::kParallel
          ? ssm::selective_scan_parallel(sel, x.data(), {}, tape ? states.get() : nullptr, keep_decays)
          : ssm::selective_scan_sequential(sel, x.data(), {}, tape ? states.get() : nullptr, keep_decays);
  Tensor out({len, dch}, std::move(y));
  if (!tape) return out;

  tape->record(out, [xn = x.node(), dn = delta.node(), an = a_log.node(), bn = b.node(),
                     cn = c.node(), skip = d.node(), states, decays, len, dch,
                     ns](std::span<const double> g) {
    auto grad_or_null = [](const std::shared_ptr<detail::Node>& n) {
      return n->requires_grad ? n->ensure_grad().data() : nullptr;
    };
    double* gx = grad_or_null(xn);
    double* gdt = grad_or_null(dn);
    double* galog = grad_or_null(an);
    double* gb = grad_or_null(bn);
    double* gc = grad_or_null(cn);
    double* gd = grad_or_null(skip);
    const double* xv = xn->value.data();
    const double* dtv = dn->value.data();
    const double* bv = bn->value.data();
    const double* cv = cn->value.data();
    const double* dv = skip->value.data();
    const double* hs = states->data();
    const double* decay = decays->data();

    std::vector<double> a(dch * ns);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(an->value[i]);
    std::vector<double> ga(dch * ns, 0.0);
    // gh[ch,n] carries dL/dh_k, including the contribution from step k+1.
    std::vector<double> gh(dch * ns, 0.0);

    for (std::size_t k = len; k-- > 0;) {
      for (std::size_t ch = 0; ch < dch; ++ch) {
        const std::size_t kc = k * dch + ch;
        const double gy = g[kc];
        const double xval = xv[kc];
        const double dt = dtv[kc];
        if (gx) gx[kc] += gy * dv[ch];
        if (gd) gd[ch] += gy * xval;
        const double* h = hs + kc * ns;
        const double* hprev = k ? hs + ((k - 1) * dch + ch) * ns : nullptr;
        double gdt_acc = 0.0;
        double gx_acc = 0.0;
        for (std::size_t n = 0; n < ns; ++n) {
          const std::size_t idx = ch * ns + n;
          const double bk = bv[k * ns + n];
          double ghn = gh[idx] + cv[k * ns + n] * gy;
          if (gc) gc[k * ns + n] += gy * h[n];
          const double abar = decay[kc * ns + n];
          const double prev = hprev ? hprev[n] : 0.0;
          const double g_abar = ghn * prev * abar;
          gdt_acc += g_abar * a[idx] + ghn * bk * xval;
          ga[idx] += g_abar * dt;
          if (gb) gb[k * ns + n] += ghn * dt * xval;
          gx_acc += ghn * dt * bk;
          gh[idx] = ghn * abar;
        }
        if (gdt) gdt[kc] += gdt_acc;
        if (gx) gx[kc] += gx_acc;
      }
    }
    if (galog)
      for (std::size_t i = 0; i < ga.size(); ++i) galog[i] += ga[i] * a[i];
  });
  return out;
}

}  // namespace mambair
