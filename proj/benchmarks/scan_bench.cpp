#include <benchmark/benchmark.h>

#include "mambair/rng.hpp"
#include "mambair/selftest.hpp"
#include "mambair/ssm.hpp"

using namespace mambair;

namespace {

struct Problem {
  ssm::SelectiveParams sel;
  std::vector<double> x;

  Problem(std::size_t length, std::size_t channels, std::size_t state) {
    Rng rng(1);
    sel = selftest::random_selective(rng, length, channels, state);
    x = selftest::random_normal(rng, length * channels);
  }
};

void BM_ScanSequential(benchmark::State& state) {
  const Problem p(state.range(0), 32, 8);
  for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_sequential(p.sel, p.x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_ScanParallel(benchmark::State& state) {
  const Problem p(state.range(0), 32, 8);
  const ssm::ScanOptions opts{ssm::InputRule::kEuler, static_cast<std::size_t>(state.range(1))};
  for (auto _ : state) benchmark::DoNotOptimize(ssm::selective_scan_parallel(p.sel, p.x, opts));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Convolutional(benchmark::State& state) {
  Rng rng(2);
  const auto lti = selftest::random_lti(rng, 8);
  const auto x = selftest::random_normal(rng, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ssm::ssm_convolutional(lti, 0.1, x));
}

void BM_Recurrent(benchmark::State& state) {
  Rng rng(2);
  const auto lti = selftest::random_lti(rng, 8);
  const auto disc = ssm::discretize_zoh(lti, 0.1);
  const auto x = selftest::random_normal(rng, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(ssm::ssm_recurrent(disc, lti.c, lti.d, x));
}

}  // namespace

BENCHMARK(BM_ScanSequential)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_ScanParallel)->ArgsProduct({{64, 1024, 4096}, {1, 2, 4}})->UseRealTime();
BENCHMARK(BM_Recurrent)->RangeMultiplier(4)->Range(64, 4096);
BENCHMARK(BM_Convolutional)->RangeMultiplier(4)->Range(64, 4096);
