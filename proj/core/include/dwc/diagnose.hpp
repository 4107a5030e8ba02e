#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dwc/correction.hpp"
#include "dwc/dataset.hpp"
#include "dwc/model.hpp"

namespace dwc {

struct DiagnoseOptions {
  std::string layer;  // site whose activations are dumped; empty = first target
  Placement placement = Placement::AfterRelu;
  CorrectionConfig config;
  std::size_t samples = 4;  // before/after dumps
  std::size_t queries = 1;  // dissimilar-pair searches, queries 0..queries-1
};

struct VarianceRow {
  std::string layer;
  std::size_t rank = 0;
  double t = 0.0;
  double variance = 0.0;
};

struct BeforeAfterRow {
  std::size_t sample = 0;
  std::size_t rank = 0;
  double before = 0.0;  // sorted activation
  double after = 0.0;   // sorted corrected activation
};

struct DissimilarRow {
  std::size_t query = 0;
  std::size_t match = 0;
  double distance = 0.0;  // summed per-channel sorted L1
};

struct MapDifferenceRow {
  std::string layer;
  double mean_abs_difference = 0.0;  // corrected vs uncorrected, averaged over samples and entries
};

struct Diagnostics {
  std::vector<VarianceRow> variance;
  std::vector<BeforeAfterRow> before_after;
  std::vector<DissimilarRow> dissimilar;
  std::vector<MapDifferenceRow> map_difference;
};

// Splits one sample's activation (h, w, c) or (features) into channels;
// a flat activation counts as a single channel.
ChannelActivations split_channels(const Tensor& batch, std::size_t sample);

Diagnostics diagnose(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                     const Dataset& samples, const DiagnoseOptions& opts);

// Writes variance_profile.csv, before_after.csv, dissimilar.csv and
// map_difference.csv into `dir`, each led by a "# provenance" line.
void write_diagnostics(const std::filesystem::path& dir, const Diagnostics& d, const std::string& provenance);

}  // namespace dwc
