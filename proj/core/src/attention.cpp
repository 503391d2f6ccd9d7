#include "mambair/attention.hpp"

#include <algorithm>
#include <cmath>

#include "mambair/errors.hpp"
#include "mambair/ops.hpp"

namespace mambair {

namespace {

// Fills p with the softmax of row i's scaled scores.
void softmax_row(const double* q, const double* k, std::size_t len, std::size_t c, double scl,
                 std::size_t i, std::vector<double>& p) {
  const double* qi = q + i * c;
  double mx = -INFINITY;
  for (std::size_t j = 0; j < len; ++j) {
    const double* kj = k + j * c;
    double s = 0.0;
    for (std::size_t t = 0; t < c; ++t) s += qi[t] * kj[t];
    p[j] = s * scl;
    mx = std::max(mx, p[j]);
  }
  double z = 0.0;
  for (std::size_t j = 0; j < len; ++j) {
    p[j] = std::exp(p[j] - mx);
    z += p[j];
  }
  const double inv = 1.0 / z;
  for (std::size_t j = 0; j < len; ++j) p[j] *= inv;
}

void check_qkv(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.rank() != 2 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("attention: q, k, v must share shape [L,C]");
  }
}

}  // namespace

std::vector<double> attention_row(const Tensor& q, const Tensor& k, std::size_t row) {
  check_qkv(q, k, k);
  const std::size_t len = q.dim(0), c = q.dim(1);
  std::vector<double> p(len);
  softmax_row(q.data().data(), k.data().data(), len, c, 1.0 / std::sqrt(static_cast<double>(c)),
              row, p);
  return p;
}

Tensor attention_core(const Tensor& q, const Tensor& k, const Tensor& v) {
  check_qkv(q, k, v);
  const std::size_t len = q.dim(0), c = q.dim(1);
  const double scl = 1.0 / std::sqrt(static_cast<double>(c));
  Tensor out({len, c});
  double* op = out.data_mut().data();
  const double* qp = q.data().data();
  const double* kp = k.data().data();
  const double* vp = v.data().data();
  std::vector<double> p(len);
  for (std::size_t i = 0; i < len; ++i) {
    softmax_row(qp, kp, len, c, scl, i, p);
    double* orow = op + i * c;
    for (std::size_t j = 0; j < len; ++j) {
      const double pj = p[j];
      const double* vj = vp + j * c;
      for (std::size_t t = 0; t < c; ++t) orow[t] += pj * vj[t];
    }
  }
  if (Tape* tape = recording_tape({&q, &k, &v})) {
    tape->record(out, [qn = q.node(), kn = k.node(), vn = v.node(), len, c,
                       scl](std::span<const double> g) {
      auto grad_or_null = [](const std::shared_ptr<detail::Node>& n) {
        return n->requires_grad ? n->ensure_grad().data() : nullptr;
      };
      double* gq = grad_or_null(qn);
      double* gk = grad_or_null(kn);
      double* gv = grad_or_null(vn);
      const double* qv = qn->value.data();
      const double* kv = kn->value.data();
      const double* vv = vn->value.data();
      std::vector<double> p(len), gp(len);
      for (std::size_t i = 0; i < len; ++i) {
        softmax_row(qv, kv, len, c, scl, i, p);
        const double* go = g.data() + i * c;
        double dotsum = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          const double* vj = vv + j * c;
          double s = 0.0;
          for (std::size_t t = 0; t < c; ++t) s += go[t] * vj[t];
          gp[j] = s;
          dotsum += p[j] * s;
          if (gv) {
            double* gvj = gv + j * c;
            for (std::size_t t = 0; t < c; ++t) gvj[t] += p[j] * go[t];
          }
        }
        const double* qi = qv + i * c;
        for (std::size_t j = 0; j < len; ++j) {
          const double gs = p[j] * (gp[j] - dotsum) * scl;
          if (gq) {
            const double* kj = kv + j * c;
            for (std::size_t t = 0; t < c; ++t) gq[i * c + t] += gs * kj[t];
          }
          if (gk) {
            double* gkj = gk + j * c;
            for (std::size_t t = 0; t < c; ++t) gkj[t] += gs * qi[t];
          }
        }
      }
    });
  }
  return out;
}

AttentionWeights init_attention_weights(std::size_t channels, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
  auto mat = [&] {
    Tensor t({channels, channels});
    for (auto& v : t.data_mut()) v = rng.uniform(-bound, bound);
    return t;
  };
  AttentionWeights w;
  w.wq = mat();
  w.wk = mat();
  w.wv = mat();
  w.wo = mat();
  w.bq = Tensor::zeros({channels});
  w.bk = Tensor::zeros({channels});
  w.bv = Tensor::zeros({channels});
  w.bo = Tensor::zeros({channels});
  return w;
}

Tensor full_attention_forward(const Tensor& x, const AttentionWeights& w) {
  if (x.rank() != 3) throw ShapeError("full_attention_forward: expected [H,W,C]");
  const std::size_t h = x.dim(0), wd = x.dim(1), c = x.dim(2);
  const Tensor tokens = reshape(x, {h * wd, c});
  const Tensor q = linear(tokens, w.wq, w.bq);
  const Tensor k = linear(tokens, w.wk, w.bk);
  const Tensor v = linear(tokens, w.wv, w.bv);
  const Tensor o = linear(attention_core(q, k, v), w.wo, w.bo);
  return reshape(o, {h, wd, c});
}

}  // namespace mambair
