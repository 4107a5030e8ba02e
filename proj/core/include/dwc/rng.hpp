#pragma once

// Counter-based random numbers. A stream is a 64-bit key plus a counter; the
// k-th draw is splitmix64(key + k * golden), so any draw can be recomputed in
// isolation and two streams with different keys do not interact. Keys are
// built by folding integers through mix(). The integer outputs are identical
// on every platform; normal() goes through libm log/cos.

#include <cstdint>
#include <initializer_list>

namespace dwc {

std::uint64_t splitmix64(std::uint64_t x) noexcept;

// Order-sensitive fold of several integers into one key.
std::uint64_t mix(std::initializer_list<std::uint64_t> parts) noexcept;

class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept;
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal() noexcept;
  // Uniform integer in [0, n), n > 0. Uses rejection, so no modulo bias.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Poisson variate by Knuth's product method; intended for mean <= ~100.
  std::uint64_t poisson(double mean) noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace dwc
