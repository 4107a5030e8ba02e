#include "dwc/otcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>

#include "dwc/error.hpp"

namespace dwc {

namespace detail {

template <typename T>
static void require_finite_impl(std::span<const T> a, const char* what) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(a[i])) {
      fail(Errc::NonFinite, std::string(what) + ": entry " + std::to_string(i) + " is not finite");
    }
  }
}

void require_finite(std::span<const double> a, const char* what) { require_finite_impl(a, what); }
void require_finite(std::span<const float> a, const char* what) { require_finite_impl(a, what); }

}  // namespace detail

namespace {

template <typename T>
SortedView sort_impl(std::span<const T> a) {
  if (a.empty()) fail(Errc::Empty, "sort_with_indices: empty input");
  detail::require_finite(a, "sort_with_indices");

  std::vector<std::pair<double, std::size_t>> keyed(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) keyed[i] = {static_cast<double>(a[i]), i};
  // pair ordering compares the index second, which gives the stable tie-break
  std::sort(keyed.begin(), keyed.end());

  SortedView out;
  out.values.resize(a.size());
  out.indices.resize(a.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    out.values[i] = keyed[i].first;
    out.indices[i] = keyed[i].second;
  }
  return out;
}

std::vector<double> sorted_copy(std::span<const double> a) {
  std::vector<double> v(a.begin(), a.end());
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

SortedView sort_with_indices(std::span<const double> a) { return sort_impl(a); }
SortedView sort_with_indices(std::span<const float> a) { return sort_impl(a); }

std::vector<double> center(std::span<const double> a) {
  if (a.empty()) fail(Errc::Empty, "center: empty input");
  detail::require_finite(a, "center");
  const double mean = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
  std::vector<double> out(a.size());
  std::transform(a.begin(), a.end(), out.begin(), [mean](double v) { return v - mean; });
  return out;
}

double wasserstein_1d_sorted(std::span<const double> a_sorted, std::span<const double> b_sorted,
                             double r) {
  if (a_sorted.size() != b_sorted.size()) {
    fail(Errc::LengthMismatch, "wasserstein_1d: lengths " + std::to_string(a_sorted.size()) +
                                   " and " + std::to_string(b_sorted.size()));
  }
  if (!(r >= 1.0) || !std::isfinite(r)) fail(Errc::InvalidConfig, "wasserstein_1d: r must be >= 1");

  double acc = 0.0;
  if (r == 1.0) {
    for (std::size_t i = 0; i < a_sorted.size(); ++i) acc += std::abs(a_sorted[i] - b_sorted[i]);
    return acc;
  }
  for (std::size_t i = 0; i < a_sorted.size(); ++i) {
    acc += std::pow(std::abs(a_sorted[i] - b_sorted[i]), r);
  }
  return std::pow(acc, 1.0 / r);
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b, double r) {
  if (a.size() != b.size()) {
    fail(Errc::LengthMismatch, "wasserstein_1d: lengths " + std::to_string(a.size()) + " and " +
                                   std::to_string(b.size()));
  }
  detail::require_finite(a, "wasserstein_1d");
  detail::require_finite(b, "wasserstein_1d");
  const auto as = sorted_copy(a);
  const auto bs = sorted_copy(b);
  return wasserstein_1d_sorted(as, bs, r);
}

void TargetDistribution::validate() const {
  if (t.empty()) fail(Errc::InvalidConfig, "target '" + layer_id + "' is empty");
  if (variance.size() != t.size()) {
    fail(Errc::InvalidConfig, "target '" + layer_id + "': variance length differs from t");
  }
  if (sample_count < 1) fail(Errc::InvalidConfig, "target '" + layer_id + "': sample_count is 0");
  detail::require_finite(t, "target t");
  detail::require_finite(variance, "target variance");
  if (!std::is_sorted(t.begin(), t.end())) {
    fail(Errc::InvalidConfig, "target '" + layer_id + "': t is not sorted");
  }
  const double mean = std::accumulate(t.begin(), t.end(), 0.0) / static_cast<double>(t.size());
  if (std::abs(mean) > 1e-5) {
    fail(Errc::InvalidConfig, "target '" + layer_id + "': mean " + std::to_string(mean) + " is not 0");
  }
  if (std::any_of(variance.begin(), variance.end(), [](double v) { return v < 0.0; })) {
    fail(Errc::InvalidConfig, "target '" + layer_id + "': negative variance");
  }
}

TargetDistribution barycenter(std::span<const std::vector<double>> samples, std::string layer_id) {
  if (samples.empty()) fail(Errc::Empty, "barycenter: no samples");
  const std::size_t n = samples.front().size();
  if (n == 0) fail(Errc::Empty, "barycenter: samples are empty");

  std::vector<std::vector<double>> sorted;
  sorted.reserve(samples.size());
  std::vector<double> sum(n, 0.0);
  for (const auto& s : samples) {
    if (s.size() != n) {
      fail(Errc::LengthMismatch, "barycenter: sample of length " + std::to_string(s.size()) +
                                     ", expected " + std::to_string(n));
    }
    auto c = center(s);
    std::sort(c.begin(), c.end());
    for (std::size_t i = 0; i < n; ++i) sum[i] += c[i];
    sorted.push_back(std::move(c));
  }

  const double m = static_cast<double>(samples.size());
  TargetDistribution out;
  out.layer_id = std::move(layer_id);
  out.sample_count = samples.size();
  out.t.resize(n);
  out.variance.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) out.t[i] = sum[i] / m;
  for (const auto& c : sorted) {
    for (std::size_t i = 0; i < n; ++i) {
      const double d = c[i] - out.t[i];
      out.variance[i] += d * d;
    }
  }
  for (double& v : out.variance) v /= m;
  return out;
}

std::size_t channel_dissimilarity(std::size_t query_index,
                                  std::span<const ChannelActivations> dataset) {
  if (query_index >= dataset.size()) {
    fail(Errc::IndexOutOfRange, "channel_dissimilarity: query " + std::to_string(query_index) +
                                    " of " + std::to_string(dataset.size()));
  }
  if (dataset.size() < 2) fail(Errc::Empty, "channel_dissimilarity: no candidate samples");

  const auto& shape_ref = dataset[query_index];
  for (const auto& sample : dataset) {
    if (sample.size() != shape_ref.size()) {
      fail(Errc::ShapeMismatch, "channel_dissimilarity: channel counts differ");
    }
    for (std::size_t c = 0; c < sample.size(); ++c) {
      if (sample[c].size() != shape_ref[c].size()) {
        fail(Errc::ShapeMismatch, "channel_dissimilarity: channel " + std::to_string(c) +
                                      " sizes differ");
      }
      detail::require_finite(sample[c], "channel_dissimilarity");
    }
  }

  ChannelActivations query_sorted = shape_ref;
  for (auto& ch : query_sorted) std::sort(ch.begin(), ch.end());

  std::size_t best = dataset.size();
  double best_distance = -1.0;
  std::vector<double> scratch;
  for (std::size_t m = 0; m < dataset.size(); ++m) {
    if (m == query_index) continue;
    double total = 0.0;
    for (std::size_t c = 0; c < query_sorted.size(); ++c) {
      scratch.assign(dataset[m][c].begin(), dataset[m][c].end());
      std::sort(scratch.begin(), scratch.end());
      total += wasserstein_1d_sorted(query_sorted[c], scratch, 1.0);
    }
    if (total > best_distance) {
      best_distance = total;
      best = m;
    }
  }
  return best;
}

}  // namespace dwc
