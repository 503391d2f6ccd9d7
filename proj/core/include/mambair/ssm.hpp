#pragma once

#include <cstddef>
#include <span>
#include <vector>

// State-space sequence kernels on plain buffers: ZOH discretization, the
// recurrent and convolutional forms of a time-invariant system, and the
// selective (input-dependent) scan in sequential and parallel-scan form.
//
// All state matrices are diagonal and stored as vectors.
namespace mambair::ssm {

/// Continuous single-input single-output system h' = A h + B x, y = C h + D x.
struct LtiParams {
  std::vector<double> a;  // diagonal of A, every entry < 0
  std::vector<double> b;
  std::vector<double> c;
  double d = 0.0;

  std::size_t state_size() const { return a.size(); }
  void validate() const;

  /// A = -exp(a_log), which is stable for any real a_log.
  static LtiParams from_log(std::span<const double> a_log, std::vector<double> b,
                            std::vector<double> c, double d);
};

struct DiscreteParams {
  std::vector<double> a_bar;
  std::vector<double> b_bar;
  double delta = 0.0;
};

/// Below this |delta * A| the ZOH input map switches to its series limit.
inline constexpr double kZohSeriesThreshold = 1e-8;

/// exp(delta*a) and (exp(delta*a) - 1) / a * b for one diagonal entry.
double zoh_a(double a, double delta);
double zoh_b(double a, double b, double delta);

DiscreteParams discretize_zoh(const LtiParams& params, double delta);

/// h_k = A_bar h_{k-1} + B_bar x_k, y_k = C h_k + D x_k.
std::vector<double> ssm_recurrent(const DiscreteParams& disc, std::span<const double> c, double d,
                                  std::span<const double> x, std::span<const double> h0 = {});

/// K[i] = C A_bar^i B_bar for i in [0, length).
std::vector<double> ssm_kernel(const LtiParams& params, double delta, std::size_t length);

/// Causal convolution of x with the kernel, plus the D x feedthrough.
std::vector<double> ssm_convolutional(const LtiParams& params, double delta,
                                      std::span<const double> x);

/// Per-token parameters of a selective scan over L tokens of D channels with
/// N states per channel. Layouts are row-major: delta [L,D], b and c [L,N],
/// a_log [D,N], d [D].
struct SelectiveParams {
  std::size_t length = 0;
  std::size_t channels = 0;
  std::size_t state = 0;
  std::vector<double> a_log;
  std::vector<double> delta;
  std::vector<double> b;
  std::vector<double> c;
  std::vector<double> d;

  void validate() const;
  double a(std::size_t ch, std::size_t n) const;
};

/// Linear maps from a token to its (delta, B, C). w_delta is [D,D],
/// w_b and w_c are [D,N].
struct SelectiveProjection {
  std::size_t channels = 0;
  std::size_t state = 0;
  std::vector<double> w_delta;
  std::vector<double> b_delta;
  std::vector<double> w_b;
  std::vector<double> w_c;
};

struct TokenParams {
  std::vector<double> delta;  // [D], strictly positive
  std::vector<double> b;      // [N]
  std::vector<double> c;      // [N]
};

TokenParams selective_project(const SelectiveProjection& proj, std::span<const double> token);

/// Projects every token of x [L,D] and packages the result with a_log and d.
SelectiveParams selective_project_sequence(const SelectiveProjection& proj,
                                           std::span<const double> x, std::span<const double> a_log,
                                           std::span<const double> d);

enum class InputRule {
  kEuler,     // B_bar = delta * B (the usual selective-scan choice)
  kExactZoh,  // B_bar = (exp(delta A) - 1) / A * B
};

struct ScanOptions {
  InputRule rule = InputRule::kEuler;
  std::size_t workers = 1;
};

/// Runs the recurrence token by token. If `states` is non-null it receives
/// every hidden state, layout [L,D,N]; `decays` likewise receives every
/// exp(delta A).
std::vector<double> selective_scan_sequential(const SelectiveParams& sel, std::span<const double> x,
                                              const ScanOptions& opts = {},
                                              std::vector<double>* states = nullptr,
                                              std::vector<double>* decays = nullptr);

/// Same recurrence evaluated with an associative scan over a fixed balanced
/// tree. Output does not depend on opts.workers.
std::vector<double> selective_scan_parallel(const SelectiveParams& sel, std::span<const double> x,
                                            const ScanOptions& opts = {},
                                            std::vector<double>* states = nullptr,
                                            std::vector<double>* decays = nullptr);

/// Affine map h -> a h + b; the monoid the parallel scan runs over.
struct ScanElement {
  double a = 1.0;
  double b = 0.0;
};

/// Applies `first`, then `second`: (a1 a2, a2 b1 + b2).
inline ScanElement compose(ScanElement first, ScanElement second) {
  return {first.a * second.a, second.a * first.b + second.b};
}

/// In-place inclusive scan: out[k] = in[0] then ... then in[k]. Pads to a
/// power of two with identity elements internally.
void inclusive_scan(std::span<ScanElement> elems);

}  // namespace mambair::ssm
