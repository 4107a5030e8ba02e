#include <benchmark/benchmark.h>

#include <algorithm>
#include <random>
#include <vector>

#include "dwc/correction.hpp"
#include "dwc/otcore.hpp"
#include "dwc/targets.hpp"

namespace {

std::vector<double> random_activation(std::size_t n, std::uint64_t seed, double zero_fraction = 0.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng) < zero_fraction ? 0.0 : g(rng);
  return v;
}

dwc::TargetDistribution random_target(std::size_t n) {
  std::vector<std::vector<double>> samples{random_activation(n, 11), random_activation(n, 12)};
  return dwc::barycenter(samples, "bench");
}

void BM_Sort(benchmark::State& state) {
  const auto a = random_activation(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) {
    auto v = dwc::sort_with_indices(a);
    benchmark::DoNotOptimize(v.values.data());
  }
  state.SetComplexityN(state.range(0));
}

void BM_Correct(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_activation(n, 2, 0.5);
  const auto t = random_target(n);
  const dwc::CorrectionConfig cfg;
  dwc::CorrectionWorkspace work;
  std::vector<double> out(n);
  for (auto _ : state) {
    dwc::correct_into<double>(a, t, cfg, work, out);
    benchmark::ClobberMemory();
  }
  state.SetComplexityN(state.range(0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_CorrectFloat(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto ad = random_activation(n, 3, 0.5);
  const std::vector<float> a(ad.begin(), ad.end());
  const auto t = random_target(n);
  const dwc::CorrectionConfig cfg;
  dwc::CorrectionWorkspace work;
  std::vector<float> out(n);
  for (auto _ : state) {
    dwc::correct_into<float>(a, t, cfg, work, out);
    benchmark::ClobberMemory();
  }
  state.SetComplexityN(state.range(0));
}

void BM_CorrectIterations(benchmark::State& state) {
  const std::size_t n = 4096;
  const auto a = random_activation(n, 4, 0.5);
  const auto t = random_target(n);
  const dwc::CorrectionConfig cfg(0.75, 0.25, static_cast<int>(state.range(0)));
  dwc::CorrectionWorkspace work;
  std::vector<double> out(n);
  for (auto _ : state) {
    dwc::correct_into<double>(a, t, cfg, work, out);
    benchmark::ClobberMemory();
  }
}

void BM_Accumulate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_activation(n, 5);
  dwc::TargetAccumulator acc("bench", n);
  for (auto _ : state) acc.accumulate(a);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

void BM_Wasserstein(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_activation(n, 6), b = random_activation(n, 7);
  for (auto _ : state) benchmark::DoNotOptimize(dwc::wasserstein_1d(a, b));
}

}  // namespace

BENCHMARK(BM_Sort)->RangeMultiplier(4)->Range(1 << 10, 1 << 20)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_Correct)->RangeMultiplier(4)->Range(1 << 10, 1 << 20)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_CorrectFloat)->RangeMultiplier(4)->Range(1 << 10, 1 << 20)->Complexity(benchmark::oNLogN);
BENCHMARK(BM_CorrectIterations)->DenseRange(0, 8, 2);
BENCHMARK(BM_Accumulate)->Arg(128)->Arg(4096)->Arg(65536);
BENCHMARK(BM_Wasserstein)->Arg(1024)->Arg(65536);
