#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dwc/tensor.hpp"

namespace dwc {

// Labelled images, (count, height, width, channels), values in [0, 1].
struct Dataset {
  Tensor images;
  std::vector<int> labels;
  int classes = 0;
  std::string name;

  std::size_t size() const noexcept { return labels.size(); }
  Shape sample_shape() const { return images.sample_shape(); }

  // Throws CountMismatch / ShapeMismatch / OutOfRangeInput on broken invariants.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset head(std::size_t count) const;
  // Every k-th sample starting at 0.
  Dataset every(std::size_t k) const;
};

// Seven-segment style handwritten digits: ten classes with random stroke
// width, slant, size, position, intensity and endpoint jitter, rendered
// anti-aliased on a side x side canvas. Sample i depends only on (seed, i).
Dataset synthetic_digits(std::size_t count, std::uint64_t seed, std::size_t side = 28);

// Gaussian clusters in a 16-dimensional feature space stored as 4x4x1
// images, one cluster per class. The class centres depend only on the
// class count, so train and test splits drawn with different seeds share them.
Dataset synthetic_blobs(std::size_t count, std::uint64_t seed, int classes = 4);

enum class Split { Train, Test };

struct DataRequest {
  std::string source;  // synthetic-digits | synthetic-blobs | mnist | path to a .dwd archive
  Split split = Split::Train;
  std::size_t count = 0;  // 0 = source default (all of mnist / .dwd, 6000 train or 2000 test synthetic)
  std::uint64_t seed = 0;
  std::filesystem::path data_dir;  // where mnist IDX files live
};

// Resolves a named source. MNIST expects the four standard IDX files in
// data_dir; Errc::Io names the missing file.
Dataset load_data(const DataRequest& req);

}  // namespace dwc
