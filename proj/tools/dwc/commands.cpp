#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dwc/bench.hpp"
#include "dwc/corruption.hpp"
#include "dwc/dataset.hpp"
#include "dwc/diagnose.hpp"
#include "dwc/error.hpp"
#include "dwc/evaluate.hpp"
#include "dwc/store.hpp"
#include "dwc/targets.hpp"
#include "dwc/train.hpp"
#include "dwc/version.hpp"

namespace dwc::cli {

namespace {

using json = nlohmann::json;

std::filesystem::path data_dir(const DataFlags& d) {
  if (!d.data_dir.empty()) return d.data_dir;
  if (const char* env = std::getenv("DWC_DATA_DIR"); env != nullptr && *env != '\0') return env;
  return ".";
}

Split parse_split(const std::string& s, Split fallback) {
  if (s.empty()) return fallback;
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  fail(Errc::InvalidConfig, "unknown split '" + s + "' (train | test)");
}

struct LoadedData {
  Dataset data;
  std::string description;  // goes into provenance lines and metadata
};

LoadedData load(const DataFlags& d, Split natural) {
  DataRequest req;
  req.source = d.source;
  req.split = parse_split(d.split, natural);
  req.count = d.count;
  req.seed = d.seed;
  req.data_dir = data_dir(d);
  LoadedData out{load_data(req), ""};
  const char* split = req.split == Split::Train ? "train" : "test";
  if (d.source.ends_with(".dwd")) {
    out.description = "dwd:" + archive_hash(d.source);
  } else {
    out.description = d.source + ":" + split + ":seed=" + std::to_string(d.seed);
  }
  out.description += ":n=" + std::to_string(out.data.size());
  return out;
}

std::string provenance(const std::string& model_hash, const std::string& targets_hash,
                       const std::string& severity_hash, const std::string& data) {
  std::string p = "dwc " + std::string(version());
  if (!model_hash.empty()) p += " model=" + model_hash;
  if (!targets_hash.empty()) p += " targets=" + targets_hash;
  if (!severity_hash.empty()) p += " severity=" + severity_hash;
  if (!data.empty()) p += " data=" + data;
  return p;
}

// Writes through a temporary buffer so a failed run never leaves a partial CSV.
template <typename F>
void emit(const std::string& path, F&& write) {
  std::ostringstream buf;
  write(buf);
  const std::string text = buf.str();
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::vector<std::size_t> parse_arch(const std::string& arch) {
  if (!arch.starts_with("mlp:")) fail(Errc::InvalidConfig, "architecture must look like mlp:128,64");
  std::vector<std::size_t> hidden;
  std::stringstream ss(arch.substr(4));
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const long v = std::stol(item, &pos);
      if (pos != item.size() || v <= 0) throw std::invalid_argument(item);
      hidden.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      fail(Errc::InvalidConfig, "bad layer width '" + item + "' in " + arch);
    }
  }
  if (hidden.empty()) fail(Errc::InvalidConfig, "architecture needs at least one hidden layer");
  return hidden;
}

CorrectionConfig step_config(const StepFlags& s) {
  return CorrectionConfig(s.lambda1, s.lambda2, s.n_iter, s.keep_zeros);
}

SeverityTable severity_table(const std::string& path) {
  return path.empty() ? SeverityTable::defaults() : SeverityTable::from_file(path);
}

struct Artifacts {
  Model model;
  std::string model_hash;
  std::map<std::string, TargetDistribution> targets;
  std::string targets_hash;
  Placement placement = Placement::AfterRelu;
};

Artifacts load_artifacts(const std::string& model_path, const std::string& targets_path, bool allow_mismatch) {
  Artifacts a;
  a.model = load_model(model_path, nullptr, &a.model_hash);
  std::string meta;
  a.targets = load_targets(targets_path, &meta, &a.targets_hash);
  const json info = json::parse(meta).value("info", json::object());
  const std::string linked = info.value("model_hash", "");
  if (linked != a.model_hash) {
    const std::string msg = "targets " + targets_path + " were built for model " +
                            (linked.empty() ? std::string("<unknown>") : linked) + ", not " + a.model_hash;
    if (!allow_mismatch) fail(Errc::ProvenanceMismatch, msg + " (pass --allow-mismatch to override)");
    std::cerr << "warning: " << msg << "\n";
  }
  a.placement = parse_placement(info.value("placement", "after_relu"));
  return a;
}

}  // namespace

int run_train(const TrainArgs& a) {
  const auto train = load(a.data, Split::Train);
  DataFlags test_flags = a.data;
  test_flags.split = "test";
  test_flags.count = 0;
  std::optional<LoadedData> test;
  if (!a.data.source.ends_with(".dwd")) test = load(test_flags, Split::Test);

  TrainHyper h;
  h.epochs = a.epochs;
  h.lr = a.lr;
  h.momentum = a.momentum;
  h.batch_size = a.batch;
  h.weight_decay = a.weight_decay;
  h.decay_epochs = a.decay_epochs;
  h.seed = a.seed;
  const MlpSpec spec{parse_arch(a.arch), parse_norm(a.norm)};
  const auto r = train_mlp(train.data, test ? &test->data : nullptr, spec, h);

  json info{{"arch", a.arch},
            {"norm", std::string(to_string(spec.norm))},
            {"epochs", a.epochs},
            {"lr", a.lr},
            {"momentum", a.momentum},
            {"batch", a.batch},
            {"weight_decay", a.weight_decay},
            {"decay_epochs", a.decay_epochs},
            {"seed", a.seed},
            {"data", train.description},
            {"train_accuracy", r.train_accuracy}};
  if (test) info["clean_accuracy"] = r.validation_accuracy;
  const std::string hash = save_model(a.out, r.model, info.dump());

  std::printf("model %s (%s)\n", a.out.c_str(), hash.c_str());
  std::printf("train accuracy %.4f\n", r.train_accuracy);
  if (test) std::printf("clean accuracy %.4f\n", r.validation_accuracy);
  return 0;
}

int run_build_targets(const BuildTargetsArgs& a) {
  std::string model_hash;
  const Model model = load_model(a.model, nullptr, &model_hash);
  const auto data = load(a.data, Split::Train);
  const Placement placement = parse_placement(a.placement);
  const auto sites = a.sites.empty() ? placement_sites(model, placement) : a.sites;
  if (sites.empty()) fail(Errc::InvalidConfig, "model has no " + a.placement + " sites");
  const auto eligible = placement_sites(model, placement);
  for (const auto& s : sites) {
    if (std::find(eligible.begin(), eligible.end(), s) == eligible.end()) {
      fail(Errc::UnknownLayer, "'" + s + "' is not a " + a.placement + " site");
    }
  }

  BuildOptions opts;
  opts.subsample = a.subsample;
  opts.batch_size = a.batch;
  opts.threads = a.threads;
  set_warning_sink([](const std::string& m) { std::cerr << "warning: " << m << "\n"; });
  const auto targets = build_targets(model, data.data, sites, opts);

  const std::size_t m = targets.begin()->second.sample_count;
  const json info{{"model_hash", model_hash},
                  {"placement", std::string(to_string(placement))},
                  {"subsample", a.subsample},
                  {"sample_count", m},
                  {"data", data.description}};
  const std::string hash = save_targets(a.out, targets, info.dump());
  std::printf("targets %s (%s)\n", a.out.c_str(), hash.c_str());
  for (const auto& [site, t] : targets) std::printf("  %s n=%zu M=%zu\n", site.c_str(), t.n(), t.sample_count);
  return 0;
}

int run_evaluate(const EvalArgs& a) {
  const Artifacts art = load_artifacts(a.model, a.targets, a.allow_mismatch);
  const Model corrected = attach_correction(art.model, art.targets, step_config(a.step), art.placement);
  const auto test = load(a.data, Split::Test);
  const auto table = severity_table(a.severity_config);
  const auto specs = parse_suite(a.suite, a.suite_seed);

  EvalOptions opts;
  opts.threads = a.threads;
  opts.batch_size = a.batch;
  opts.timing = !a.no_timing;
  auto report = evaluate(art.model, corrected, test.data, specs, table, opts);
  if (!a.baseline.empty()) {
    std::ifstream in(a.baseline);
    if (!in) fail(Errc::Io, "cannot open baseline " + a.baseline);
    const auto base = read_baseline_csv(in);
    report.summary.mce_uncorrected = compute_mce(report, base, false);
    report.summary.mce_corrected = compute_mce(report, base, true);
  }

  const std::string prov = provenance(art.model_hash, art.targets_hash, table.hash(), test.description);
  emit(a.out, [&](std::ostream& os) { write_report_csv(os, report, prov); });
  if (!a.out.empty() && a.out != "-") {
    for (const auto& r : report.rows) {
      std::printf("%-16s %d  %.4f -> %.4f\n", std::string(to_string(r.kind)).c_str(), r.severity,
                  r.accuracy_uncorrected, r.accuracy_corrected);
    }
    std::printf("mean             %.4f -> %.4f\n", report.summary.accuracy_uncorrected,
                report.summary.accuracy_corrected);
    if (report.summary.mce_corrected) {
      std::printf("mCE              %.2f -> %.2f\n", *report.summary.mce_uncorrected, *report.summary.mce_corrected);
    }
  }
  return 0;
}

int run_sweep(const SweepArgs& a) {
  std::vector<GridPoint> grid;
  for (const auto& g : a.grid) {
    GridPoint p;
    char tail = 0;
    if (std::sscanf(g.c_str(), "%lf:%lf:%d%c", &p.lambda1, &p.lambda2, &p.n_iter, &tail) != 3) {
      fail(Errc::InvalidConfig, "grid point '" + g + "' must look like 0.75:0.25:2");
    }
    grid.push_back(p);
  }
  for (double l1 : a.lambda1s) {
    for (double l2 : a.lambda2s) {
      for (int n : a.n_iters) grid.push_back({l1, l2, n});
    }
  }
  if (grid.empty()) grid = {{0.75, 0.25, 2}, {0.25, 0.5, 1}, {0.5, 0.5, 1}};

  const EvalArgs& e = a.eval;
  const Artifacts art = load_artifacts(e.model, e.targets, e.allow_mismatch);
  const auto test = load(e.data, Split::Test);
  const auto table = severity_table(e.severity_config);
  const auto specs = parse_suite(e.suite, e.suite_seed);
  EvalOptions opts;
  opts.threads = e.threads;
  opts.batch_size = e.batch;
  opts.timing = false;
  const auto result = sweep(art.model, art.targets, art.placement, grid, test.data, specs, table, opts);

  const std::string prov = provenance(art.model_hash, art.targets_hash, table.hash(), test.description);
  emit(e.out, [&](std::ostream& os) { write_sweep_csv(os, result, prov); });
  if (!e.out.empty() && e.out != "-") {
    std::printf("uncorrected %.4f, n_iter=0 %.4f\n", result.accuracy_uncorrected, result.accuracy_n_iter0);
    for (const auto& r : result.rows) {
      std::printf("  (%g, %g, %d) %.4f\n", r.point.lambda1, r.point.lambda2, r.point.n_iter, r.accuracy_corrected);
    }
  }
  return 0;
}

int run_diagnose(const DiagnoseArgs& a) {
  const Artifacts art = load_artifacts(a.model, a.targets, a.allow_mismatch);
  const auto data = load(a.data, Split::Test);
  DiagnoseOptions opts;
  opts.layer = a.layer;
  opts.placement = art.placement;
  opts.config = step_config(a.step);
  opts.samples = a.samples;
  opts.queries = a.queries;
  const auto d = diagnose(art.model, art.targets, data.data, opts);
  write_diagnostics(a.out_dir, d, provenance(art.model_hash, art.targets_hash, "", data.description));
  std::printf("wrote diagnostics to %s\n", a.out_dir.c_str());
  for (const auto& r : d.dissimilar) {
    std::printf("  query %zu: most dissimilar sample %zu (distance %.4g)\n", r.query, r.match, r.distance);
  }
  return 0;
}

int run_bench(const BenchArgs& a) {
  BenchOptions opts;
  opts.sizes = a.sizes;
  opts.config = step_config(a.step);
  opts.trials = a.trials;
  opts.min_seconds = a.min_seconds;
  opts.seed = a.seed;
  const auto result = bench_correction(opts);

  std::optional<OverheadResult> overhead;
  std::string model_hash, targets_hash, data_desc;
  if (!a.model.empty() || !a.targets.empty()) {
    if (a.model.empty() || a.targets.empty()) fail(Errc::InvalidConfig, "overhead timing needs --model and --targets");
    const Artifacts art = load_artifacts(a.model, a.targets, true);
    model_hash = art.model_hash;
    targets_hash = art.targets_hash;
    const Model corrected = attach_correction(art.model, art.targets, opts.config, art.placement);
    DataFlags d = a.data;
    d.count = a.overhead_batch;
    const auto data = load(d, Split::Test);
    data_desc = data.description;
    overhead = bench_overhead(art.model, corrected, data.data.images, a.trials);
  }

  auto num = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  emit(a.out, [&](std::ostream& os) {
    os << "# " << provenance(model_hash, targets_hash, "", data_desc) << "\n";
    os << "metric,n,value\n";
    for (const auto& p : result.points) os << "correction_seconds," << p.n << ',' << num(p.seconds) << "\n";
    os << "nlogn_exponent,," << num(result.exponent) << "\n";
    if (overhead) {
      os << "forward_seconds_per_sample_uncorrected,," << num(overhead->seconds_per_sample_uncorrected) << "\n";
      os << "forward_seconds_per_sample_corrected,," << num(overhead->seconds_per_sample_corrected) << "\n";
    }
  });
  if (!a.out.empty() && a.out != "-") {
    for (const auto& p : result.points) std::printf("N=%-8zu %.3e s\n", p.n, p.seconds);
    std::printf("exponent against N log N: %.3f\n", result.exponent);
    if (overhead) {
      std::printf("per-sample forward: %.3e s -> %.3e s\n", overhead->seconds_per_sample_uncorrected,
                  overhead->seconds_per_sample_corrected);
    }
  }
  return 0;
}

int run_mce(const MceArgs& a) {
  std::ifstream report_in(a.report), base_in(a.baseline);
  if (!report_in) fail(Errc::Io, "cannot open report " + a.report);
  if (!base_in) fail(Errc::Io, "cannot open baseline " + a.baseline);
  const auto report = read_report_csv(report_in);
  const auto base = read_baseline_csv(base_in);
  std::printf("mCE uncorrected %.4f\n", compute_mce(report, base, false));
  std::printf("mCE corrected %.4f\n", compute_mce(report, base, true));
  return 0;
}

}  // namespace dwc::cli
