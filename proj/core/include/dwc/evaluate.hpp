#pragma once

#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "dwc/corruption.hpp"
#include "dwc/dataset.hpp"
#include "dwc/model.hpp"

namespace dwc {

struct EvalRow {
  CorruptionKind kind = CorruptionKind::Identity;
  int severity = 1;
  std::size_t n_samples = 0;
  double accuracy_uncorrected = 0.0;
  double accuracy_corrected = 0.0;
  double seconds_per_sample_uncorrected = 0.0;
  double seconds_per_sample_corrected = 0.0;
};

struct EvalSummary {
  double accuracy_uncorrected = 0.0;
  double accuracy_corrected = 0.0;
  double seconds_per_sample_uncorrected = 0.0;
  double seconds_per_sample_corrected = 0.0;
  std::optional<double> mce_uncorrected;
  std::optional<double> mce_corrected;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  EvalSummary summary;

  // Arithmetic means of the rows; mCE fields are left as they are.
  void recompute_summary();
  const EvalRow* find(CorruptionKind kind, int severity) const;
};

struct EvalOptions {
  unsigned threads = 1;
  std::size_t batch_size = 200;
  bool timing = true;  // false leaves the wallclock columns at 0
};

// Evaluates every spec on the whole test set with both models. The two
// forward passes see the same corrupted batch. Throws EmptySuite.
EvalReport evaluate(const Model& uncorrected, const Model& corrected, const Dataset& test,
                    const std::vector<CorruptionSpec>& specs, const SeverityTable& table,
                    const EvalOptions& opts = {});

using BaselineErrors = std::map<std::pair<CorruptionKind, int>, double>;

// 100 * mean over kinds of sum_sev error / sum_sev baseline error. Throws
// MissingBaseline when a report row has no positive baseline.
double compute_mce(const EvalReport& report, const BaselineErrors& baseline, bool corrected);

struct GridPoint {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  int n_iter = 0;
  friend auto operator<=>(const GridPoint&, const GridPoint&) = default;
};

struct SweepRow {
  GridPoint point;
  double accuracy_corrected = 0.0;  // averaged over the suite rows
};

struct SweepResult {
  std::vector<SweepRow> rows;
  double accuracy_uncorrected = 0.0;
  double accuracy_n_iter0 = 0.0;  // centered only; see correct()
};

// Attaches corrections built from `targets` for every grid point and
// evaluates the suite. Throws DuplicateGridPoint.
SweepResult sweep(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                  Placement placement, const std::vector<GridPoint>& grid, const Dataset& test,
                  const std::vector<CorruptionSpec>& specs, const SeverityTable& table,
                  const EvalOptions& opts = {});

// CSV emitters. `provenance` is written as a leading "# ..." line.
void write_report_csv(std::ostream& out, const EvalReport& report, const std::string& provenance);
void write_sweep_csv(std::ostream& out, const SweepResult& result, const std::string& provenance);

// Reads the detail rows of a report CSV written by write_report_csv.
EvalReport read_report_csv(std::istream& in);
// kind,severity,error lines (header and '#' lines skipped).
BaselineErrors read_baseline_csv(std::istream& in);

}  // namespace dwc
