#include "dwc/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "dwc/error.hpp"
#include "dwc/rng.hpp"

namespace dwc {

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double best_time_per_call(F&& f, double min_seconds, int trials) {
  double best = std::numeric_limits<double>::infinity();
  for (int t = 0; t < std::max(1, trials); ++t) {
    std::size_t calls = 0;
    const auto start = Clock::now();
    double elapsed = 0.0;
    do {
      f();
      ++calls;
      elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    } while (elapsed < min_seconds);
    best = std::min(best, elapsed / static_cast<double>(calls));
  }
  return best;
}

}  // namespace

BenchResult bench_correction(const BenchOptions& opts) {
  std::vector<std::size_t> sizes = opts.sizes;
  if (sizes.empty()) {
    for (std::size_t e = 10; e <= 20; ++e) sizes.push_back(std::size_t{1} << e);
  }
  BenchResult result;
  for (const std::size_t n : sizes) {
    if (n == 0) fail(Errc::InvalidConfig, "bench sizes must be >= 1");
    CounterRng rng(mix({opts.seed, n}));
    std::vector<float> a(n);
    for (float& v : a) v = static_cast<float>(rng.normal());
    std::vector<double> t(n);
    for (double& v : t) v = rng.normal();
    std::sort(t.begin(), t.end());
    double mean = 0.0;
    for (const double v : t) mean += v;
    mean /= static_cast<double>(n);
    for (double& v : t) v -= mean;
    TargetDistribution target{"bench", std::move(t), std::vector<double>(n, 0.0), 1};

    CorrectionWorkspace work;
    std::vector<float> out(n);
    const double s = best_time_per_call([&] { correct_into<float>(a, target, opts.config, work, out); },
                                        opts.min_seconds, opts.trials);
    result.points.push_back({n, s});
  }
  if (result.points.size() >= 2) result.exponent = fit_nlogn_exponent(result.points);
  return result;
}

double fit_nlogn_exponent(std::span<const BenchPoint> points) {
  std::vector<std::pair<double, double>> xy;
  for (const auto& p : points) {
    if (p.n < 2 || !(p.seconds > 0.0)) continue;
    const double n = static_cast<double>(p.n);
    xy.emplace_back(std::log(n * std::log2(n)), std::log(p.seconds));
  }
  if (xy.size() < 2) fail(Errc::InvalidConfig, "exponent fit needs two sizes >= 2 with positive time");
  double mx = 0.0, my = 0.0;
  for (const auto& [x, y] : xy) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(xy.size());
  my /= static_cast<double>(xy.size());
  double sxy = 0.0, sxx = 0.0;
  for (const auto& [x, y] : xy) {
    sxy += (x - mx) * (y - my);
    sxx += (x - mx) * (x - mx);
  }
  if (sxx == 0.0) fail(Errc::InvalidConfig, "exponent fit needs distinct sizes");
  return sxy / sxx;
}

OverheadResult bench_overhead(const Model& uncorrected, const Model& corrected, const Tensor& batch, int trials) {
  if (batch.batch() == 0) fail(Errc::Empty, "bench_overhead: empty batch");
  const double n = static_cast<double>(batch.batch());
  OverheadResult r;
  r.seconds_per_sample_uncorrected = best_time_per_call([&] { forward(uncorrected, batch); }, 0.05, trials) / n;
  r.seconds_per_sample_corrected = best_time_per_call([&] { forward(corrected, batch); }, 0.05, trials) / n;
  return r;
}

}  // namespace dwc
