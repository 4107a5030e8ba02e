#include "dwc/correction.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "dwc/error.hpp"

namespace dwc {

CorrectionConfig::CorrectionConfig(double lambda1, double lambda2, int n_iter, bool preserve_zeros,
                                   double zero_tolerance)
    : lambda1_(lambda1),
      lambda2_(lambda2),
      n_iter_(n_iter),
      preserve_zeros_(preserve_zeros),
      zero_tolerance_(zero_tolerance) {
  if (!(lambda1 >= 0.0 && lambda1 <= 1.0)) {
    fail(Errc::InvalidConfig, "lambda1 must lie in [0, 1], got " + std::to_string(lambda1));
  }
  if (!(lambda2 >= 0.0 && lambda2 <= 1.0)) {
    fail(Errc::InvalidConfig, "lambda2 must lie in [0, 1], got " + std::to_string(lambda2));
  }
  if (n_iter < 0) fail(Errc::InvalidConfig, "n_iter must be >= 0");
  if (!(zero_tolerance >= 0.0) || !std::isfinite(zero_tolerance)) {
    fail(Errc::InvalidConfig, "zero_tolerance must be finite and >= 0");
  }
}

CorrectionConfig CorrectionConfig::with_preserve_zeros(bool on) const {
  CorrectionConfig copy = *this;
  copy.preserve_zeros_ = on;
  return copy;
}

template <std::floating_point T>
void correct_into(std::span<const T> a, const TargetDistribution& target,
                  const CorrectionConfig& cfg, CorrectionWorkspace& work, std::span<T> out) {
  const std::size_t n = a.size();
  if (n != target.n()) {
    fail(Errc::LengthMismatch, "correct: activation length " + std::to_string(n) +
                                   " but target '" + target.layer_id + "' has n=" +
                                   std::to_string(target.n()));
  }
  if (out.size() != n) fail(Errc::LengthMismatch, "correct: output span has the wrong length");
  if (n == 0) return;
  detail::require_finite(a, "correct");

  double sum = 0.0;
  for (const T v : a) sum += static_cast<double>(v);
  const double mean = sum / static_cast<double>(n);

  auto& cur = work.current;
  cur.resize(n);
  for (std::size_t j = 0; j < n; ++j) cur[j] = static_cast<double>(a[j]) - mean;

  const double l1 = cfg.lambda1();
  const double l2 = cfg.lambda2();
  const auto& t = target.t;
  auto& keyed = work.keyed;
  keyed.resize(n);
  for (int it = 0; it < cfg.n_iter(); ++it) {
    for (std::size_t j = 0; j < n; ++j) keyed[j] = {cur[j], j};
    std::sort(keyed.begin(), keyed.end());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = keyed[i].second;
      const double sorted_value = keyed[i].first;
      // a~_j + l1 (t_(i) - a~_(i)) and a~_j + l2 (a_j - a~_j), written as convex
      // combinations so that l = 0 and l = 1 are exact
      const double after_prior = (1.0 - l1) * sorted_value + l1 * t[i];
      cur[j] = (1.0 - l2) * after_prior + l2 * static_cast<double>(a[j]);
    }
  }

  const double tol = cfg.zero_tolerance();
  for (std::size_t j = 0; j < n; ++j) {
    if (cfg.preserve_zeros() && std::abs(static_cast<double>(a[j])) <= tol) {
      out[j] = a[j];
    } else {
      out[j] = static_cast<T>(cur[j]);
    }
  }
}

template <std::floating_point T>
std::vector<T> correct(std::span<const T> a, const TargetDistribution& target,
                       const CorrectionConfig& cfg) {
  CorrectionWorkspace work;
  std::vector<T> out(a.size());
  correct_into<T>(a, target, cfg, work, out);
  return out;
}

EnergyBreakdown energy(std::span<const double> a, std::span<const double> a_corrected,
                       const TargetDistribution& target, double zero_tolerance) {
  if (a.size() != a_corrected.size() || a.size() != target.n()) {
    fail(Errc::LengthMismatch, "energy: lengths " + std::to_string(a.size()) + ", " +
                                   std::to_string(a_corrected.size()) + ", target n=" +
                                   std::to_string(target.n()));
  }
  detail::require_finite(a, "energy");
  detail::require_finite(a_corrected, "energy");

  EnergyBreakdown e;
  auto centered = center(a_corrected);
  std::sort(centered.begin(), centered.end());
  e.prior = wasserstein_1d_sorted(centered, target.t, 1.0);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - a_corrected[i];
    sq += d * d;
    if (std::abs(a[i]) <= zero_tolerance && a_corrected[i] != a[i]) e.sparsity_violated = true;
  }
  e.likelihood = 0.5 * sq;
  e.total = e.prior + e.likelihood;
  return e;
}

template <std::floating_point T>
std::vector<std::vector<T>> correct_batch(std::span<const std::vector<T>> batch,
                                          const TargetDistribution& target,
                                          const CorrectionConfig& cfg, unsigned threads) {
  std::vector<std::vector<T>> out(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].size() != target.n()) {
      fail(Errc::LengthMismatch, "correct_batch: sample " + std::to_string(i) + " has length " +
                                     std::to_string(batch[i].size()));
    }
  }
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(threads, batch.size()));
  if (workers <= 1) {
    CorrectionWorkspace work;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      out[i].resize(batch[i].size());
      correct_into<T>(batch[i], target, cfg, work, out[i]);
    }
    return out;
  }

  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        CorrectionWorkspace work;
        for (std::size_t i = w; i < batch.size(); i += workers) {
          out[i].resize(batch[i].size());
          correct_into<T>(batch[i], target, cfg, work, out[i]);
        }
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

template void correct_into<float>(std::span<const float>, const TargetDistribution&,
                                  const CorrectionConfig&, CorrectionWorkspace&, std::span<float>);
template void correct_into<double>(std::span<const double>, const TargetDistribution&,
                                   const CorrectionConfig&, CorrectionWorkspace&,
                                   std::span<double>);
template std::vector<float> correct<float>(std::span<const float>, const TargetDistribution&,
                                           const CorrectionConfig&);
template std::vector<double> correct<double>(std::span<const double>, const TargetDistribution&,
                                             const CorrectionConfig&);
template std::vector<std::vector<float>> correct_batch<float>(std::span<const std::vector<float>>,
                                                              const TargetDistribution&,
                                                              const CorrectionConfig&, unsigned);
template std::vector<std::vector<double>> correct_batch<double>(
    std::span<const std::vector<double>>, const TargetDistribution&, const CorrectionConfig&,
    unsigned);

}  // namespace dwc
