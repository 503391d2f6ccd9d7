#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "mambair/rng.hpp"
#include "mambair/ssm.hpp"
#include "mambair/tensor.hpp"

// Property and equivalence checks shared by the `selftest` subcommand and the
// test suites.
namespace mambair::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// "PASS name: detail (0.12 s)".
std::string format_result(const CheckResult& r);

/// A stable system with N in [1, max_state], entries of B, C, D in [-1, 1].
ssm::LtiParams random_lti(Rng& rng, std::size_t max_state = 8);

/// Selective parameters with delta in [1e-3, 1], normal B and C.
ssm::SelectiveParams random_selective(Rng& rng, std::size_t length, std::size_t channels,
                                      std::size_t state);

std::vector<double> random_normal(Rng& rng, std::size_t n);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares autodiff against central differences on `samples` entries drawn
/// uniformly from `params`. Relative error is |a - n| / max(|a|, |n|, floor).
GradCheck grad_check(const std::function<Tensor()>& loss, std::vector<Tensor> params,
                     std::size_t samples, std::uint64_t seed, double step = 1e-4,
                     double floor = 1e-6);

CheckResult check_form_equivalence(std::size_t trials = 200, std::uint64_t seed = 1);
CheckResult check_scan_equivalence(std::size_t trials = 200, std::uint64_t seed = 2);
CheckResult check_stability(std::size_t trials = 100, std::uint64_t seed = 3);
CheckResult check_kernel_decay(std::size_t trials = 200, std::uint64_t seed = 4);
CheckResult check_scan_gradient(std::uint64_t seed = 5);
CheckResult check_model_gradient(std::uint64_t seed = 6);
CheckResult check_permutations();
CheckResult check_dihedral_group();
CheckResult check_checkpoint_roundtrip();
CheckResult check_metric_symmetry();
CheckResult check_charbonnier_limit();
CheckResult check_metric_sanity();
CheckResult check_attention_rows();
CheckResult check_global_erf();
CheckResult check_training_determinism();

/// Runs every check, printing one line per check to `out` if given.
std::vector<CheckResult> run_all(std::ostream* out = nullptr);

}  // namespace mambair::selftest
