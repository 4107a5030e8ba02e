#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dwc/dataset.hpp"
#include "dwc/model.hpp"
#include "dwc/otcore.hpp"

namespace dwc {

// Running rank-wise sums of centered, sorted activations for one layer.
class TargetAccumulator {
 public:
  TargetAccumulator(std::string layer_id, std::size_t n);

  // Throws LengthMismatch and NonFinite.
  void accumulate(std::span<const double> activation);
  void accumulate(std::span<const float> activation);

  const std::string& layer_id() const noexcept { return layer_id_; }
  std::size_t n() const noexcept { return sum_sorted_.size(); }
  std::size_t count() const noexcept { return count_; }
  const std::vector<double>& sum_sorted() const noexcept { return sum_sorted_; }
  const std::vector<double>& sum_sq_sorted() const noexcept { return sum_sq_sorted_; }

  // Smallest unclamped variance sum_sq/M - t^2; negative values come from
  // cancellation and are clamped by finalize().
  double min_raw_variance() const;

  // t = sum/M, variance = max(0, sum_sq/M - t^2). Throws EmptyAccumulator.
  TargetDistribution finalize() const;

  friend bool operator==(const TargetAccumulator& a, const TargetAccumulator& b) {
    return a.layer_id_ == b.layer_id_ && a.count_ == b.count_ && a.sum_sorted_ == b.sum_sorted_ &&
           a.sum_sq_sorted_ == b.sum_sq_sorted_;
  }

  // Componentwise sum. Throws LayerMismatch when layer_id or n differ.
  friend TargetAccumulator merge(const TargetAccumulator& a, const TargetAccumulator& b);

 private:
  void add_sorted(std::vector<double>& centered);

  std::string layer_id_;
  std::vector<double> sum_sorted_;
  std::vector<double> sum_sq_sorted_;
  std::size_t count_ = 0;
  std::vector<double> scratch_;
};

TargetAccumulator merge(const TargetAccumulator& a, const TargetAccumulator& b);

// Receives a message whenever finalize() clamps a negative variance.
void set_warning_sink(std::function<void(const std::string&)> sink);

struct BuildOptions {
  std::size_t subsample = 1;  // use every k-th sample
  std::size_t batch_size = 256;
  unsigned threads = 1;
};

// Forward passes over `data` with taps at `sites`, one accumulator per site.
// Samples are grouped into fixed chunks whose accumulators are merged in
// chunk order, so the result does not depend on the thread count.
std::map<std::string, TargetDistribution> build_targets(const Model& model, const Dataset& data,
                                                        std::span<const std::string> sites,
                                                        const BuildOptions& opts = {});

}  // namespace dwc
