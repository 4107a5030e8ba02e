#pragma once

// Test-time activation correction.
//
// Minimizes E(a~|a) = D(a|a~) + R(a~) by alternating a prior step, which moves
// the i-th smallest current value toward the i-th target value, with a
// likelihood step that pulls each entry back toward the original activation.
// The input is centered once before the loop and the mean is not re-added;
// with lambda2 > 0 part of it comes back through the likelihood pull.
// n_iter == 0 therefore returns the centered input (zeros restored), not the
// input itself.

#include <concepts>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dwc/otcore.hpp"

namespace dwc {

class CorrectionConfig {
 public:
  // Defaults suit batchnorm networks:
  // lambda1 = 0.75, lambda2 = 0.25, two iterations, zeros preserved.
  CorrectionConfig() = default;

  // Throws Errc::InvalidConfig when a step size leaves [0, 1], n_iter < 0 or
  // zero_tolerance < 0.
  CorrectionConfig(double lambda1, double lambda2, int n_iter, bool preserve_zeros = true,
                   double zero_tolerance = 0.0);

  double lambda1() const noexcept { return lambda1_; }
  double lambda2() const noexcept { return lambda2_; }
  int n_iter() const noexcept { return n_iter_; }
  bool preserve_zeros() const noexcept { return preserve_zeros_; }
  double zero_tolerance() const noexcept { return zero_tolerance_; }

  CorrectionConfig with_preserve_zeros(bool on) const;

  friend bool operator==(const CorrectionConfig&, const CorrectionConfig&) = default;

 private:
  double lambda1_ = 0.75;
  double lambda2_ = 0.25;
  int n_iter_ = 2;
  bool preserve_zeros_ = true;
  double zero_tolerance_ = 0.0;
};

struct EnergyBreakdown {
  double prior = 0.0;       // W1(center(a~), t)
  double likelihood = 0.0;  // 0.5 * ||a - a~||^2
  double total = 0.0;
  // The sparsity well is infinite rather than a finite energy; it is reported
  // as violated when an entry that was zero in `a` moved.
  bool sparsity_violated = false;
};

template <std::floating_point T>
std::vector<T> correct(std::span<const T> a, const TargetDistribution& target,
                       const CorrectionConfig& cfg);

// Runs one correction into `out` (resized to a.size()), reusing `work` buffers
// between calls. Bit-identical to correct().
struct CorrectionWorkspace {
  std::vector<double> current;
  std::vector<std::pair<double, std::size_t>> keyed;
};
template <std::floating_point T>
void correct_into(std::span<const T> a, const TargetDistribution& target,
                  const CorrectionConfig& cfg, CorrectionWorkspace& work, std::span<T> out);

EnergyBreakdown energy(std::span<const double> a, std::span<const double> a_corrected,
                       const TargetDistribution& target, double zero_tolerance = 0.0);

// Applies correct() to each vector independently. Output order equals input
// order for any thread count.
template <std::floating_point T>
std::vector<std::vector<T>> correct_batch(std::span<const std::vector<T>> batch,
                                          const TargetDistribution& target,
                                          const CorrectionConfig& cfg, unsigned threads = 1);

}  // namespace dwc
