#pragma once

// Order-statistics primitives for one-dimensional optimal transport.
//
// In 1D the optimal coupling between two equal-size samples pairs the i-th
// smallest value of one with the i-th smallest of the other, so distances
// and barycenters reduce to sorting. Everything here is a pure function;
// accumulation happens in double precision regardless of payload type.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace dwc {

struct SortedView {
  std::vector<double> values;        // ascending
  std::vector<std::size_t> indices;  // values[i] == original[indices[i]]
};

struct TargetDistribution {
  std::string layer_id;
  std::vector<double> t;         // sorted, mean-zero barycenter
  std::vector<double> variance;  // per-rank spread over the training set
  std::size_t sample_count = 0;

  std::size_t n() const noexcept { return t.size(); }

  // Throws Errc::InvalidConfig when a structural invariant is broken.
  void validate() const;
};

// Ties keep ascending original index. Rejects NaN/Inf and empty input.
SortedView sort_with_indices(std::span<const double> a);
SortedView sort_with_indices(std::span<const float> a);

std::vector<double> center(std::span<const double> a);

// (sum_i |a_(i) - b_(i)|^r)^(1/r) over the sorted views of a and b.
double wasserstein_1d(std::span<const double> a, std::span<const double> b, double r = 1.0);

// Same as wasserstein_1d but both inputs must already be sorted ascending.
double wasserstein_1d_sorted(std::span<const double> a_sorted, std::span<const double> b_sorted,
                             double r = 1.0);

// Centers and sorts each sample, then averages rank-wise. The variance profile
// uses the population (1/M) divisor.
TargetDistribution barycenter(std::span<const std::vector<double>> samples,
                              std::string layer_id = {});

// One activation map split by channel: channels[c] holds that channel's values.
using ChannelActivations = std::vector<std::vector<double>>;

// Index of the sample whose channel-wise sorted L1 distance to the query is
// largest. The query itself is never returned; ties go to the lowest index.
std::size_t channel_dissimilarity(std::size_t query_index,
                                  std::span<const ChannelActivations> dataset);

namespace detail {
void require_finite(std::span<const double> a, const char* what);
void require_finite(std::span<const float> a, const char* what);
}  // namespace detail

}  // namespace dwc
