#include "dwc/evaluate.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <exception>
#include <istream>
#include <set>
#include <sstream>
#include <thread>

#include "dwc/error.hpp"

namespace dwc {

namespace {

struct TaskResult {
  std::vector<std::size_t> correct;  // per model
  std::vector<double> seconds;
};

std::size_t count_correct(const Tensor& logits, const std::vector<int>& labels, std::size_t begin) {
  const std::size_t k = logits.sample_size();
  std::size_t c = 0;
  for (std::size_t r = 0; r < logits.batch(); ++r) {
    const float* row = logits.data.data() + r * k;
    if (static_cast<int>(std::max_element(row, row + k) - row) == labels[begin + r]) ++c;
  }
  return c;
}

// Per spec and model: correct count and summed forward wallclock.
std::vector<TaskResult> run_suite(const std::vector<const Model*>& models, const Dataset& test,
                                  const std::vector<CorruptionSpec>& specs, const SeverityTable& table,
                                  const EvalOptions& opts) {
  if (specs.empty()) fail(Errc::EmptySuite, "evaluation suite has no corruptions");
  if (test.size() == 0) fail(Errc::Empty, "evaluation set is empty");
  if (opts.batch_size == 0) fail(Errc::InvalidConfig, "batch size must be >= 1");
  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (specs[i].kind == specs[j].kind && specs[i].severity == specs[j].severity) {
        fail(Errc::InvalidConfig, "suite lists " + std::string(to_string(specs[i].kind)) + ":" +
                                      std::to_string(specs[i].severity) + " twice");
      }
    }
  }
  const CorruptedSuite suite(test, specs, table);
  const std::size_t n = test.size();
  const std::size_t chunks = (n + opts.batch_size - 1) / opts.batch_size;
  const std::size_t tasks = specs.size() * chunks;
  std::vector<TaskResult> per_task(tasks);

  auto run = [&](std::size_t t) {
    const CorruptionSpec& spec = specs[t / chunks];
    const std::size_t b = (t % chunks) * opts.batch_size;
    const std::size_t e = std::min(n, b + opts.batch_size);
    const Tensor batch = suite.batch(spec, b, e);
    TaskResult r;
    for (const Model* m : models) {
      const auto start = std::chrono::steady_clock::now();
      const Tensor logits = forward(*m, batch).logits;
      const auto stop = std::chrono::steady_clock::now();
      r.correct.push_back(count_correct(logits, test.labels, b));
      r.seconds.push_back(opts.timing ? std::chrono::duration<double>(stop - start).count() : 0.0);
    }
    per_task[t] = std::move(r);
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(opts.threads, tasks));
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks; ++t) run(t);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t t = w; t < tasks; t += workers) run(t);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::vector<TaskResult> per_spec(specs.size(), TaskResult{std::vector<std::size_t>(models.size(), 0),
                                                            std::vector<double>(models.size(), 0.0)});
  for (std::size_t t = 0; t < tasks; ++t) {
    auto& dst = per_spec[t / chunks];
    for (std::size_t m = 0; m < models.size(); ++m) {
      dst.correct[m] += per_task[t].correct[m];
      dst.seconds[m] += per_task[t].seconds[m];
    }
  }
  return per_spec;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(Errc::Malformed, "not a number: '" + s + "'");
  }
}

int parse_int(const std::string& s) {
  const double v = parse_double(s);
  if (v != static_cast<int>(v)) fail(Errc::Malformed, "not an integer: '" + s + "'");
  return static_cast<int>(v);
}

void check_spec_unique(const std::vector<CorruptionSpec>& specs) {
  std::set<std::pair<int, int>> seen;
  for (const auto& s : specs) {
    if (!seen.emplace(static_cast<int>(s.kind), s.kind == CorruptionKind::Identity ? 1 : s.severity).second) {
      fail(Errc::InvalidConfig, "suite lists " + std::string(to_string(s.kind)) + " severity " +
                                    std::to_string(s.severity) + " twice");
    }
  }
}

}  // namespace

void EvalReport::recompute_summary() {
  EvalSummary s;
  s.mce_uncorrected = summary.mce_uncorrected;
  s.mce_corrected = summary.mce_corrected;
  if (!rows.empty()) {
    const double n = static_cast<double>(rows.size());
    for (const auto& r : rows) {
      s.accuracy_uncorrected += r.accuracy_uncorrected;
      s.accuracy_corrected += r.accuracy_corrected;
      s.seconds_per_sample_uncorrected += r.seconds_per_sample_uncorrected;
      s.seconds_per_sample_corrected += r.seconds_per_sample_corrected;
    }
    s.accuracy_uncorrected /= n;
    s.accuracy_corrected /= n;
    s.seconds_per_sample_uncorrected /= n;
    s.seconds_per_sample_corrected /= n;
  }
  summary = s;
}

const EvalRow* EvalReport::find(CorruptionKind kind, int severity) const {
  for (const auto& r : rows) {
    if (r.kind == kind && (kind == CorruptionKind::Identity || r.severity == severity)) return &r;
  }
  return nullptr;
}

EvalReport evaluate(const Model& uncorrected, const Model& corrected, const Dataset& test,
                    const std::vector<CorruptionSpec>& specs, const SeverityTable& table,
                    const EvalOptions& opts) {
  if (specs.empty()) fail(Errc::EmptySuite, "evaluation suite has no corruptions");
  check_spec_unique(specs);
  const auto res = run_suite({&uncorrected, &corrected}, test, specs, table, opts);
  EvalReport report;
  const double n = static_cast<double>(test.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EvalRow row;
    row.kind = specs[i].kind;
    row.severity = specs[i].kind == CorruptionKind::Identity ? 1 : specs[i].severity;
    row.n_samples = test.size();
    row.accuracy_uncorrected = static_cast<double>(res[i].correct[0]) / n;
    row.accuracy_corrected = static_cast<double>(res[i].correct[1]) / n;
    row.seconds_per_sample_uncorrected = res[i].seconds[0] / n;
    row.seconds_per_sample_corrected = res[i].seconds[1] / n;
    report.rows.push_back(row);
  }
  report.recompute_summary();
  return report;
}

double compute_mce(const EvalReport& report, const BaselineErrors& baseline, bool corrected) {
  if (report.rows.empty()) fail(Errc::EmptySuite, "mCE of an empty report");
  std::map<CorruptionKind, std::pair<double, double>> per_kind;
  for (const auto& r : report.rows) {
    auto it = baseline.find({r.kind, r.severity});
    if (it == baseline.end() || !(it->second > 0.0)) {
      fail(Errc::MissingBaseline, "no positive baseline error for " + std::string(to_string(r.kind)) +
                                      " severity " + std::to_string(r.severity));
    }
    const double err = 1.0 - (corrected ? r.accuracy_corrected : r.accuracy_uncorrected);
    per_kind[r.kind].first += err;
    per_kind[r.kind].second += it->second;
  }
  double total = 0.0;
  for (const auto& [_, sums] : per_kind) total += sums.first / sums.second;
  return 100.0 * total / static_cast<double>(per_kind.size());
}

SweepResult sweep(const Model& model, const std::map<std::string, TargetDistribution>& targets,
                  Placement placement, const std::vector<GridPoint>& grid, const Dataset& test,
                  const std::vector<CorruptionSpec>& specs, const SeverityTable& table,
                  const EvalOptions& opts) {
  if (grid.empty()) fail(Errc::InvalidConfig, "sweep grid is empty");
  std::set<GridPoint> seen;
  for (const auto& g : grid) {
    if (!seen.insert(g).second) {
      fail(Errc::DuplicateGridPoint, "grid point (" + fmt_double(g.lambda1) + ", " + fmt_double(g.lambda2) +
                                         ", " + std::to_string(g.n_iter) + ") listed twice");
    }
  }
  check_spec_unique(specs);

  std::vector<Model> variants;
  variants.reserve(grid.size() + 2);
  variants.push_back(model);
  variants.push_back(attach_correction(model, targets, CorrectionConfig(0.0, 0.0, 0), placement));
  for (const auto& g : grid) {
    variants.push_back(attach_correction(model, targets, CorrectionConfig(g.lambda1, g.lambda2, g.n_iter), placement));
  }
  std::vector<const Model*> ptrs;
  for (const auto& v : variants) ptrs.push_back(&v);
  EvalOptions o = opts;
  o.timing = false;
  const auto res = run_suite(ptrs, test, specs, table, o);

  const double n = static_cast<double>(test.size());
  auto mean_acc = [&](std::size_t m) {
    double s = 0.0;
    for (const auto& r : res) s += static_cast<double>(r.correct[m]) / n;
    return s / static_cast<double>(res.size());
  };
  SweepResult out;
  out.accuracy_uncorrected = mean_acc(0);
  out.accuracy_n_iter0 = mean_acc(1);
  for (std::size_t g = 0; g < grid.size(); ++g) out.rows.push_back({grid[g], mean_acc(g + 2)});
  return out;
}

void write_report_csv(std::ostream& out, const EvalReport& report, const std::string& provenance) {
  out << "# " << provenance << "\n";
  out << "kind,severity,n_samples,accuracy_uncorrected,accuracy_corrected,"
         "seconds_per_sample_uncorrected,seconds_per_sample_corrected\n";
  for (const auto& r : report.rows) {
    out << to_string(r.kind) << ',' << r.severity << ',' << r.n_samples << ',' << fmt_double(r.accuracy_uncorrected)
        << ',' << fmt_double(r.accuracy_corrected) << ',' << fmt_double(r.seconds_per_sample_uncorrected) << ','
        << fmt_double(r.seconds_per_sample_corrected) << "\n";
  }
  const auto& s = report.summary;
  out << "summary,,," << fmt_double(s.accuracy_uncorrected) << ',' << fmt_double(s.accuracy_corrected) << ','
      << fmt_double(s.seconds_per_sample_uncorrected) << ',' << fmt_double(s.seconds_per_sample_corrected) << "\n";
  if (s.mce_uncorrected || s.mce_corrected) {
    out << "mce,,," << (s.mce_uncorrected ? fmt_double(*s.mce_uncorrected) : "") << ','
        << (s.mce_corrected ? fmt_double(*s.mce_corrected) : "") << ",,\n";
  }
}

void write_sweep_csv(std::ostream& out, const SweepResult& result, const std::string& provenance) {
  out << "# " << provenance << "\n";
  out << "lambda1,lambda2,n_iter,accuracy_corrected,accuracy_uncorrected,accuracy_n_iter0\n";
  for (const auto& r : result.rows) {
    out << fmt_double(r.point.lambda1) << ',' << fmt_double(r.point.lambda2) << ',' << r.point.n_iter << ','
        << fmt_double(r.accuracy_corrected) << ',' << fmt_double(result.accuracy_uncorrected) << ','
        << fmt_double(result.accuracy_n_iter0) << "\n";
  }
}

EvalReport read_report_csv(std::istream& in) {
  EvalReport report;
  std::string line;
  bool header = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header) {
      header = true;
      continue;
    }
    const auto cells = split_csv(line);
    if (cells.empty() || cells[0] == "summary" || cells[0] == "mce") continue;
    if (cells.size() != 7) fail(Errc::Malformed, "report row has " + std::to_string(cells.size()) + " cells");
    EvalRow r;
    r.kind = parse_kind(cells[0]);
    r.severity = parse_int(cells[1]);
    r.n_samples = static_cast<std::size_t>(parse_int(cells[2]));
    r.accuracy_uncorrected = parse_double(cells[3]);
    r.accuracy_corrected = parse_double(cells[4]);
    r.seconds_per_sample_uncorrected = parse_double(cells[5]);
    r.seconds_per_sample_corrected = parse_double(cells[6]);
    report.rows.push_back(r);
  }
  report.recompute_summary();
  return report;
}

BaselineErrors read_baseline_csv(std::istream& in) {
  BaselineErrors out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto cells = split_csv(line);
    if (cells.size() != 3) fail(Errc::Malformed, "baseline row needs kind,severity,error");
    if (cells[0] == "kind") continue;
    out[{parse_kind(cells[0]), parse_int(cells[1])}] = parse_double(cells[2]);
  }
  return out;
}

}  // namespace dwc
