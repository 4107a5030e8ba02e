#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dwc/bench.hpp"
#include "dwc/dataset.hpp"
#include "dwc/diagnose.hpp"
#include "dwc/evaluate.hpp"
#include "dwc/targets.hpp"
#include "dwc/train.hpp"
#include "fixtures.hpp"

using namespace dwc;
using fixtures::code_of;

namespace {

struct Trained {
  Dataset train, test;
  Model model;
  std::map<std::string, TargetDistribution> targets;
};

const Trained& trained() {
  static const Trained t = [] {
    Trained r;
    r.train = synthetic_blobs(400, 1);
    r.test = synthetic_blobs(120, 2);
    TrainHyper h;
    h.epochs = 3;
    r.model = train_mlp(r.train, nullptr, MlpSpec{{12, 8}, NormKind::BatchNorm}, h).model;
    const auto sites = placement_sites(r.model, Placement::AfterConv);
    r.targets = build_targets(r.model, r.train, sites);
    return r;
  }();
  return t;
}

EvalRow row(CorruptionKind k, int s, double acc) {
  EvalRow r;
  r.kind = k;
  r.severity = s;
  r.n_samples = 100;
  r.accuracy_uncorrected = acc;
  r.accuracy_corrected = acc + 0.1;
  return r;
}

}  // namespace

TEST(Mce, WorkedExample) {
  // kind A: errors 0.2 + 0.4 against baseline 0.4 + 0.4 -> 0.75
  // kind B: error 0.5 against baseline 0.25 -> 2.0; mean 1.375 -> 137.5
  EvalReport r;
  r.rows = {row(CorruptionKind::GaussianNoise, 1, 0.8), row(CorruptionKind::GaussianNoise, 2, 0.6),
            row(CorruptionKind::FogHaze, 3, 0.5)};
  const BaselineErrors base{{{CorruptionKind::GaussianNoise, 1}, 0.4},
                            {{CorruptionKind::GaussianNoise, 2}, 0.4},
                            {{CorruptionKind::FogHaze, 3}, 0.25}};
  EXPECT_NEAR(compute_mce(r, base, false), 137.5, 1e-9);
  // corrected errors 0.1 + 0.3 -> 0.5 and 0.4 -> 1.6; mean 1.05
  EXPECT_NEAR(compute_mce(r, base, true), 105.0, 1e-9);
  BaselineErrors missing = base;
  missing.erase({CorruptionKind::FogHaze, 3});
  EXPECT_EQ(code_of([&] { compute_mce(r, missing, false); }), Errc::MissingBaseline);
}

TEST(Mce, BaselineEqualToModelGivesHundred) {
  EvalReport r;
  r.rows = {row(CorruptionKind::ShotNoise, 1, 0.7), row(CorruptionKind::Pixelate, 5, 0.9)};
  BaselineErrors base;
  for (const auto& x : r.rows) base[{x.kind, x.severity}] = 1.0 - x.accuracy_uncorrected;
  EXPECT_NEAR(compute_mce(r, base, false), 100.0, 1e-9);
}

TEST(Evaluate, MatchesManualAccuracyAndIsThreadIndependent) {
  const auto& t = trained();
  const Model corrected = attach_correction(t.model, t.targets, CorrectionConfig(), Placement::AfterConv);
  const auto specs = parse_suite("identity,impulse_noise:5,fog_haze:2", 9);
  const auto table = SeverityTable::defaults();
  EvalOptions opts;
  opts.timing = false;
  opts.batch_size = 50;
  const auto a = evaluate(t.model, corrected, t.test, specs, table, opts);
  opts.threads = 3;
  opts.batch_size = 17;
  const auto b = evaluate(t.model, corrected, t.test, specs, table, opts);
  ASSERT_EQ(a.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(a.rows[i].accuracy_uncorrected, b.rows[i].accuracy_uncorrected);
    EXPECT_EQ(a.rows[i].accuracy_corrected, b.rows[i].accuracy_corrected);
    EXPECT_EQ(a.rows[i].n_samples, 120u);
  }
  EXPECT_NEAR(a.find(CorruptionKind::Identity, 1)->accuracy_uncorrected, accuracy(t.model, t.test), 1e-12);

  const CorruptedSuite suite(t.test, {specs[1]}, table);
  const auto logits = forward(corrected, suite.batch(specs[1], 0, t.test.size())).logits;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < t.test.size(); ++i) {
    const auto s = logits.sample(i);
    hits += static_cast<int>(std::max_element(s.begin(), s.end()) - s.begin()) == t.test.labels[i];
  }
  EXPECT_NEAR(a.rows[1].accuracy_corrected, static_cast<double>(hits) / 120.0, 1e-12);
  EXPECT_NEAR(a.summary.accuracy_corrected,
              (a.rows[0].accuracy_corrected + a.rows[1].accuracy_corrected + a.rows[2].accuracy_corrected) / 3, 1e-12);
}

TEST(Evaluate, Errors) {
  const auto& t = trained();
  EXPECT_EQ(code_of([&] { evaluate(t.model, t.model, t.test, {}, SeverityTable::defaults()); }), Errc::EmptySuite);
  const auto dup = parse_suite("fog_haze:2,fog_haze:2", 0);
  EXPECT_EQ(code_of([&] { evaluate(t.model, t.model, t.test, dup, SeverityTable::defaults()); }), Errc::InvalidConfig);
}

TEST(Evaluate, CsvRoundTrip) {
  const auto& t = trained();
  const auto specs = parse_suite("identity,gaussian_noise:1-2", 0);
  EvalOptions opts;
  opts.timing = false;
  auto report = evaluate(t.model, t.model, t.test, specs, SeverityTable::defaults(), opts);
  report.summary.mce_uncorrected = 99.5;
  std::stringstream ss;
  write_report_csv(ss, report, "dwc test");
  const std::string text = ss.str();
  EXPECT_EQ(text.rfind("# dwc test\n", 0), 0u);
  EXPECT_NE(text.find("\nsummary,"), std::string::npos);
  EXPECT_NE(text.find("\nmce,"), std::string::npos);
  std::stringstream in(text);
  const auto back = read_report_csv(in);
  ASSERT_EQ(back.rows.size(), report.rows.size());
  for (std::size_t i = 0; i < back.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].kind, report.rows[i].kind);
    EXPECT_EQ(back.rows[i].severity, report.rows[i].severity);
    EXPECT_EQ(back.rows[i].accuracy_corrected, report.rows[i].accuracy_corrected);
  }
  std::stringstream base("# x\nkind,severity,error\nfog_haze,2,0.25\n");
  const auto b = read_baseline_csv(base);
  EXPECT_EQ(b.at({CorruptionKind::FogHaze, 2}), 0.25);
}

TEST(Sweep, MatchesDirectEvaluationAndRejectsDuplicates) {
  const auto& t = trained();
  const auto specs = parse_suite("impulse_noise:4", 1);
  const auto table = SeverityTable::defaults();
  const std::vector<GridPoint> grid{{0.75, 0.25, 2}, {1.0, 0.0, 1}};
  EvalOptions opts;
  opts.timing = false;
  const auto r = sweep(t.model, t.targets, Placement::AfterConv, grid, t.test, specs, table, opts);
  ASSERT_EQ(r.rows.size(), 2u);
  for (const auto& row : r.rows) {
    const Model c = attach_correction(t.model, t.targets,
                                      CorrectionConfig(row.point.lambda1, row.point.lambda2, row.point.n_iter),
                                      Placement::AfterConv);
    const auto direct = evaluate(t.model, c, t.test, specs, table, opts);
    EXPECT_EQ(row.accuracy_corrected, direct.summary.accuracy_corrected);
    EXPECT_EQ(r.accuracy_uncorrected, direct.summary.accuracy_uncorrected);
  }
  const Model zero = attach_correction(t.model, t.targets, CorrectionConfig(0, 0, 0), Placement::AfterConv);
  EXPECT_EQ(r.accuracy_n_iter0, evaluate(t.model, zero, t.test, specs, table, opts).summary.accuracy_corrected);

  const std::vector<GridPoint> dup{{0.5, 0.5, 1}, {0.5, 0.5, 1}};
  EXPECT_EQ(code_of([&] { sweep(t.model, t.targets, Placement::AfterConv, dup, t.test, specs, table); }),
            Errc::DuplicateGridPoint);
  std::stringstream ss;
  write_sweep_csv(ss, r, "p");
  EXPECT_EQ(ss.str().rfind("# p\n", 0), 0u);
}

TEST(Diagnose, ProducesAllTablesAndFiles) {
  const auto& t = trained();
  DiagnoseOptions opts;
  opts.placement = Placement::AfterConv;
  opts.samples = 2;
  opts.queries = 2;
  const auto d = diagnose(t.model, t.targets, t.test.head(10), opts);
  std::size_t total = 0;
  for (const auto& [k, v] : t.targets) total += v.n();
  EXPECT_EQ(d.variance.size(), total);
  const std::size_t n = t.targets.begin()->second.n();
  ASSERT_EQ(d.before_after.size(), 2 * n);
  for (std::size_t i = 1; i < n; ++i) EXPECT_LE(d.before_after[i - 1].after, d.before_after[i].after);
  ASSERT_EQ(d.dissimilar.size(), 2u);
  EXPECT_NE(d.dissimilar[0].match, 0u);
  ASSERT_EQ(d.map_difference.size(), t.model.layers.size());
  EXPECT_EQ(d.map_difference.front().layer, "flatten");
  EXPECT_EQ(d.map_difference.front().mean_abs_difference, 0.0);
  EXPECT_GT(d.map_difference.back().mean_abs_difference, 0.0);

  const auto dir = std::filesystem::path(testing::TempDir()) / "dwc_diag";
  std::filesystem::create_directories(dir);
  write_diagnostics(dir, d, "dwc x");
  for (const char* f : {"variance_profile.csv", "before_after.csv", "dissimilar.csv", "map_difference.csv"}) {
    std::ifstream in(dir / f);
    std::string first;
    std::getline(in, first);
    EXPECT_EQ(first, "# dwc x") << f;
  }
}

TEST(Diagnose, SplitChannels) {
  Tensor x({1, 2, 1, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto c = split_channels(x, 0);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0], (std::vector<double>{1, 4}));
  EXPECT_EQ(c[2], (std::vector<double>{3, 6}));
  EXPECT_EQ(split_channels(Tensor({2, 4}), 1).size(), 1u);
}

TEST(Bench, ExponentFitRecoversPowerLaws) {
  std::vector<BenchPoint> lin, quad;
  for (std::size_t n = 1024; n <= (1u << 20); n *= 4) {
    const double x = static_cast<double>(n) * std::log2(static_cast<double>(n));
    lin.push_back({n, 3e-9 * x});
    quad.push_back({n, 1e-15 * x * x});
  }
  EXPECT_NEAR(fit_nlogn_exponent(lin), 1.0, 1e-9);
  EXPECT_NEAR(fit_nlogn_exponent(quad), 2.0, 1e-9);
  const std::vector<BenchPoint> one{{1024, 1.0}};
  EXPECT_THROW(fit_nlogn_exponent(one), Error);
}

TEST(Bench, SmallRunProducesPoints) {
  BenchOptions o;
  o.sizes = {256, 1024};
  o.min_seconds = 0.005;
  o.trials = 1;
  const auto r = bench_correction(o);
  ASSERT_EQ(r.points.size(), 2u);
  for (const auto& p : r.points) EXPECT_GT(p.seconds, 0.0);
  EXPECT_TRUE(std::isfinite(r.exponent));
}
