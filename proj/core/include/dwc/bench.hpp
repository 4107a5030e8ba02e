#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dwc/correction.hpp"
#include "dwc/model.hpp"

namespace dwc {

struct BenchPoint {
  std::size_t n = 0;
  double seconds = 0.0;  // one correct() call
};

struct BenchOptions {
  std::vector<std::size_t> sizes;  // empty = 2^10 .. 2^20
  CorrectionConfig config;
  double min_seconds = 0.1;  // per trial
  int trials = 3;            // the fastest trial is reported
  std::uint64_t seed = 1;
};

struct BenchResult {
  std::vector<BenchPoint> points;
  double exponent = 0.0;  // slope of log t against log(N log2 N)
};

BenchResult bench_correction(const BenchOptions& opts);

// Least-squares slope of log(seconds) on log(n log2 n). Needs two distinct n >= 2.
double fit_nlogn_exponent(std::span<const BenchPoint> points);

struct OverheadResult {
  double seconds_per_sample_uncorrected = 0.0;
  double seconds_per_sample_corrected = 0.0;
};

// Per-sample forward time of both models on `batch`, best of `trials`.
OverheadResult bench_overhead(const Model& uncorrected, const Model& corrected, const Tensor& batch,
                              int trials = 3);

}  // namespace dwc
