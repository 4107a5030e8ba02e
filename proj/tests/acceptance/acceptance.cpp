// Acceptance gate: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Lines starting with "info" are diagnostics and never affect the result.

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dwc/bench.hpp"
#include "dwc/correction.hpp"
#include "dwc/corruption.hpp"
#include "dwc/dataset.hpp"
#include "dwc/evaluate.hpp"
#include "dwc/otcore.hpp"
#include "dwc/rng.hpp"
#include "dwc/store.hpp"
#include "dwc/targets.hpp"
#include "dwc/train.hpp"
#include "oracles.hpp"

using namespace dwc;
namespace fs = std::filesystem;

namespace {

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s  %-28s %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

void info(const std::string& line) {
  std::printf("info  %s\n", line.c_str());
  std::fflush(stdout);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

TargetDistribution make_target(std::vector<double> t) {
  TargetDistribution d;
  d.layer_id = "x";
  d.variance.assign(t.size(), 0.0);
  d.t = std::move(t);
  d.sample_count = 1;
  return d;
}

bool bit_equal(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

double squared_distance_sorted(std::vector<double> a, const std::vector<double>& b_sorted) {
  std::sort(a.begin(), a.end());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b_sorted[i]) * (a[i] - b_sorted[i]);
  return s;
}

void transport_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int k = 0; k < 500; ++k) {
    const std::size_t n = 1 + rng() % 7;
    const auto a = oracle::random_vector(rng, n), b = oracle::random_vector(rng, n);
    worst = std::max(worst, std::abs(wasserstein_1d(a, b, 1.0) - oracle::brute_force_matching(a, b, 1.0)));
  }
  const double secs = seconds_since(t0);
  report("transport-oracle", worst <= 1e-9 && secs < 10.0, fmt("max |W1 - matching| %.3g, %.2f s", worst, secs));
}

void barycenter_optimality() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(202);
  double worst_w2 = std::numeric_limits<double>::infinity();
  int w1_beaten = 0;
  for (int k = 0; k < 200; ++k) {
    const std::size_t n = 1 + rng() % 4, m = 1 + rng() % 3;
    std::vector<std::vector<double>> samples;
    for (std::size_t j = 0; j < m; ++j) samples.push_back(oracle::random_vector(rng, n));
    const auto t = barycenter(samples).t;
    std::vector<std::vector<double>> sorted;
    for (const auto& s : samples) {
      auto c = oracle::centered(s);
      std::sort(c.begin(), c.end());
      sorted.push_back(std::move(c));
    }
    auto objective_w2 = [&](const std::vector<double>& c) {
      double s = 0.0;
      for (const auto& q : sorted) s += squared_distance_sorted(c, q);
      return s;
    };
    auto objective_w1 = [&](const std::vector<double>& c) {
      double s = 0.0;
      for (const auto& q : sorted) s += wasserstein_1d(c, q, 1.0);
      return s;
    };
    const double at_t2 = objective_w2(t), at_t1 = objective_w1(t);
    bool beaten_w1 = false;
    for (int c = 0; c < 1000; ++c) {
      const auto cand = oracle::centered(oracle::random_vector(rng, n));
      worst_w2 = std::min(worst_w2, objective_w2(cand) - at_t2);
      beaten_w1 = beaten_w1 || objective_w1(cand) < at_t1 - 1e-9;
    }
    w1_beaten += beaten_w1 ? 1 : 0;
  }
  const double secs = seconds_since(t0);
  report("barycenter-optimality", worst_w2 >= -1e-9 && secs < 30.0,
         fmt("min (sum W2^2(cand) - sum W2^2(t)) %.3g, %.2f s", worst_w2, secs));
  info(fmt("barycenter: a candidate beat t in sum W1 on %d of 200 instances", w1_beaten));
}

void correction_exactness() {
  std::mt19937_64 rng(303);
  bool identity_ok = true, target_ok = true, zeros_ok = true;
  double target_err = 0.0;
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 1 + rng() % 200;
    const auto a = oracle::random_vector(rng, n);
    const auto t = make_target(oracle::random_target(rng, n));
    const auto out = correct<double>(a, t, CorrectionConfig(0.0, 1.0, 1 + static_cast<int>(rng() % 4)));
    for (std::size_t i = 0; i < n; ++i) identity_ok = identity_ok && bit_equal(out[i], a[i]);

    auto full = correct<double>(a, t, CorrectionConfig(1.0, 0.0, 1));
    std::sort(full.begin(), full.end());
    for (std::size_t i = 0; i < n; ++i) target_err = std::max(target_err, std::abs(full[i] - t.t[i]));

    const auto sparse = oracle::random_sparse(rng, n);
    const auto corrected = correct<double>(sparse, t, CorrectionConfig(0.75, 0.25, 2, true));
    for (std::size_t i = 0; i < n; ++i) {
      if (sparse[i] == 0.0) zeros_ok = zeros_ok && bit_equal(corrected[i], sparse[i]);
    }
  }
  target_ok = target_err <= 1e-6;
  const std::vector<double> hand_in{0, 3, 1, 2};
  const auto hand = correct<double>(hand_in, make_target({-1, -1, 1, 1}), CorrectionConfig(1.0, 0.0, 1, true));
  const bool hand_ok = hand == std::vector<double>{0, 1, -1, 1};
  report("algorithm-exactness", identity_ok && target_ok && zeros_ok && hand_ok,
         fmt("(a) identity %s (b) max |sorted - t| %.3g (c) zeros %s (d) hand trace %s", identity_ok ? "bit-exact" : "broken",
             target_err, zeros_ok ? "bit-exact" : "moved", hand_ok ? "exact" : "differs"));
}

void prior_monotonicity() {
  std::mt19937_64 rng(404);
  double worst_rise = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < 100; ++k) {
    const std::size_t n = 2 + rng() % 300;
    const auto a = oracle::random_vector(rng, n);
    const auto t = make_target(oracle::random_target(rng, n));
    const double l1 = std::uniform_real_distribution<double>(0.05, 1.0)(rng);
    double prev = energy(a, correct<double>(a, t, CorrectionConfig(l1, 0.0, 0, false)), t).prior;
    for (int it = 1; it <= 10; ++it) {
      const double cur = energy(a, correct<double>(a, t, CorrectionConfig(l1, 0.0, it, false)), t).prior;
      worst_rise = std::max(worst_rise, cur - prev);
      prev = cur;
    }
  }
  report("prior-monotonicity", worst_rise <= 1e-7, fmt("largest per-step increase %.3g", worst_rise));
}

void targets_equivalence() {
  std::mt19937_64 rng(505);
  double stream_err = 0.0, assoc_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    const std::size_t n = 1 + rng() % 64;
    std::vector<std::vector<double>> samples;
    for (int j = 0; j < 100; ++j) samples.push_back(oracle::random_vector(rng, n, -5.0, 5.0));
    TargetAccumulator acc("x", n), a("x", n), b("x", n), c("x", n);
    for (std::size_t j = 0; j < samples.size(); ++j) {
      acc.accumulate(samples[j]);
      (j < 30 ? a : j < 70 ? b : c).accumulate(samples[j]);
    }
    const auto streamed = acc.finalize(), batch = barycenter(samples, "x");
    const auto left = merge(merge(a, b), c).finalize(), right = merge(a, merge(b, c)).finalize();
    for (std::size_t i = 0; i < n; ++i) {
      stream_err = std::max({stream_err, std::abs(streamed.t[i] - batch.t[i]),
                             std::abs(streamed.variance[i] - batch.variance[i])});
      assoc_err = std::max({assoc_err, std::abs(left.t[i] - right.t[i]),
                            std::abs(left.variance[i] - right.variance[i])});
    }
  }
  report("streaming-merge", stream_err <= 1e-6 && assoc_err <= 1e-9,
         fmt("streamed vs batch %.3g, merge associativity %.3g", stream_err, assoc_err));
}

void gradient_check() {
  std::mt19937_64 rng(606);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t depth = 1 + rng() % 3;
    std::vector<std::size_t> sizes{2 + rng() % 5};
    for (std::size_t l = 0; l < depth; ++l) sizes.push_back(2 + rng() % 6);
    sizes.push_back(2 + rng() % 4);
    MlpParams p = init_mlp(sizes, trial % 2 ? NormKind::BatchNorm : NormKind::None, rng());
    std::uniform_real_distribution<double> u(-1, 1);
    for (auto& g : p.gamma)
      for (double& v : g) v = 0.5 + 0.3 * u(rng);
    for (auto& b : p.bias)
      for (double& v : b) v = 0.2 * u(rng);
    const std::size_t batch = 3 + rng() % 6;
    std::vector<double> x(batch * sizes[0]);
    for (double& v : x) v = u(rng);
    std::vector<int> labels;
    for (std::size_t i = 0; i < batch; ++i) labels.push_back(static_cast<int>(rng() % sizes.back()));

    MlpParams grad = p;
    mlp_loss(p, x, labels, &grad);
    auto params = p.trainable();
    const auto grads = std::as_const(grad).trainable();
    double err = 0.0, scale = 0.0;
    for (std::size_t a = 0; a < params.size(); ++a) {
      for (std::size_t i = 0; i < params[a].size(); ++i) {
        const double keep = params[a][i], h = 1e-6;
        params[a][i] = keep + h;
        const double up = mlp_loss(p, x, labels);
        params[a][i] = keep - h;
        const double down = mlp_loss(p, x, labels);
        params[a][i] = keep;
        err = std::max(err, std::abs((up - down) / (2 * h) - grads[a][i]));
        scale = std::max(scale, std::abs(grads[a][i]));
      }
    }
    worst = std::max(worst, err / std::max(1.0, scale));
  }
  report("gradient-check", worst <= 1e-4, fmt("max relative error %.3g over 20 MLPs", worst));
}

struct SeedRun {
  double clean = 0.0;
  EvalReport report;
};

SeedRun run_seed(std::uint64_t seed) {
  const Dataset train = synthetic_digits(8000, mix({seed, 0ull}));
  const Dataset test = synthetic_digits(2000, mix({seed, 1ull}));
  TrainHyper hyper;
  hyper.seed = seed;
  hyper.decay_epochs = {5, 8};
  const auto trained = train_mlp(train, &test, MlpSpec{{128, 64}, NormKind::BatchNorm}, hyper);
  const auto sites = placement_sites(trained.model, Placement::AfterConv);
  BuildOptions build;
  build.subsample = 2;
  const auto targets = build_targets(trained.model, train, sites, build);
  const Model corrected = attach_correction(trained.model, targets, CorrectionConfig(0.75, 0.25, 2), Placement::AfterConv);
  const auto specs = parse_suite("identity,impulse_noise:1,impulse_noise:5,fog_haze:1,fog_haze:5,gaussian_noise:1,"
                                 "gaussian_noise:5,shot_noise:1,shot_noise:5",
                                 1000 + seed);
  EvalOptions opts;
  opts.timing = false;
  return {trained.validation_accuracy, evaluate(trained.model, corrected, test, specs, SeverityTable::defaults(), opts)};
}

void desk_scale() {
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<SeedRun> runs;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    runs.push_back(run_seed(seed));
    const auto& r = runs.back().report;
    std::string line = fmt("seed %llu clean %.1f%% |", static_cast<unsigned long long>(seed), 100 * runs.back().clean);
    for (const auto& row : r.rows) {
      line += fmt(" %s:%d %.1f->%.1f", std::string(to_string(row.kind)).c_str(), row.severity,
                  100 * row.accuracy_uncorrected, 100 * row.accuracy_corrected);
    }
    info(line);
  }
  const double secs = seconds_since(t0);
  auto mean_gap = [&](CorruptionKind k, int sev) {
    double s = 0.0;
    for (const auto& r : runs) {
      const auto* row = r.report.find(k, sev);
      s += row->accuracy_corrected - row->accuracy_uncorrected;
    }
    return 100.0 * s / static_cast<double>(runs.size());
  };
  double min_clean = 1.0;
  for (const auto& r : runs) min_clean = std::min(min_clean, r.clean);
  const double impulse = mean_gap(CorruptionKind::ImpulseNoise, 5), fog = mean_gap(CorruptionKind::FogHaze, 5);
  const double identity_drop = -mean_gap(CorruptionKind::Identity, 1);
  report("desk-scale-robustness",
         min_clean >= 0.95 && impulse >= 5.0 && fog >= 5.0 && identity_drop <= 2.0 && secs < 900.0,
         fmt("clean >= %.1f%%, impulse:5 %+.2f, fog_haze:5 %+.2f, identity drop %.2f points, %.0f s", 100 * min_clean, impulse,
             fog, identity_drop, secs));

  double sev1 = 0.0, sev5 = 0.0;
  int kinds = 0;
  for (CorruptionKind k : kAllCorruptions) {
    if (!is_noise(k)) continue;
    const double g1 = mean_gap(k, 1), g5 = mean_gap(k, 5);
    info(fmt("crossover %s: gap sev1 %+.2f, sev5 %+.2f", std::string(to_string(k)).c_str(), g1, g5));
    sev1 += g1;
    sev5 += g5;
    ++kinds;
  }
  sev1 /= kinds;
  sev5 /= kinds;
  report("severity-crossover", sev5 >= sev1, fmt("mean noise gap sev1 %+.2f, sev5 %+.2f points", sev1, sev5));
}

void overhead_scaling() {
  BenchOptions opts;
  opts.min_seconds = 0.05;
  opts.trials = 3;
  const auto r = bench_correction(opts);
  for (const auto& p : r.points) info(fmt("bench n=%zu %.3g s", p.n, p.seconds));
  report("overhead-scaling", r.exponent >= 0.9 && r.exponent <= 1.25,
         fmt("exponent %.3f against N log N over 2^10..2^20", r.exponent));
}

void store_and_replay() {
  const fs::path dir = fs::temp_directory_path() / ("dwc_acceptance_" + std::to_string(std::random_device{}()));
  fs::create_directories(dir);
  bool ok = true;
  std::string detail;
  auto check = [&](bool cond, const char* what) {
    if (!cond) {
      ok = false;
      detail += std::string(" ") + what;
    }
  };

  const Dataset train = synthetic_digits(600, 77), test = synthetic_digits(150, 78);
  TrainHyper hyper;
  hyper.epochs = 2;
  const auto trained = train_mlp(train, nullptr, MlpSpec{{32, 16}, NormKind::BatchNorm}, hyper);
  const auto targets = build_targets(trained.model, train, placement_sites(trained.model, Placement::AfterRelu));

  const auto mhash = save_model(dir / "m.dwm", trained.model, R"({"note": "acceptance"})");
  const Model m2 = load_model(dir / "m.dwm");
  check(encode_archive(model_to_archive(m2, R"({"note": "acceptance"})")) == read_file(dir / "m.dwm"), "model-bytes");
  check(forward(m2, test.images).logits == forward(trained.model, test.images).logits, "model-forward");
  save_model(dir / "m2.dwm", m2, R"({"note": "acceptance"})");
  check(archive_hash(dir / "m2.dwm") == mhash, "model-hash");

  save_targets(dir / "t.dwt", targets);
  const auto t2 = load_targets(dir / "t.dwt");
  check(t2.size() == targets.size(), "targets-count");
  for (const auto& [k, t] : targets) {
    check(t2.count(k) && t2.at(k).t == t.t && t2.at(k).variance == t.variance && t2.at(k).sample_count == t.sample_count,
          "targets-values");
  }
  save_targets(dir / "t2.dwt", t2);
  check(read_file(dir / "t.dwt") == read_file(dir / "t2.dwt"), "targets-bytes");

  save_dataset(dir / "d.dwd", test);
  const Dataset d2 = load_dataset(dir / "d.dwd");
  check(d2.images == test.images && d2.labels == test.labels && d2.classes == test.classes, "dataset-values");
  save_dataset(dir / "d2.dwd", d2);
  check(read_file(dir / "d.dwd") == read_file(dir / "d2.dwd"), "dataset-bytes");

  const auto specs = parse_suite("identity,gaussian_noise:1-5,shot_noise:3,impulse_noise:5,motion_blur:4,fog_haze:2,"
                                 "brightness:5,contrast:5",
                                 9);
  const CorruptedSuite s1(test, specs, SeverityTable::defaults()), s2(test, specs, SeverityTable::defaults());
  for (const auto& spec : specs) check(s1.batch(spec, 0, test.size()) == s2.batch(spec, 0, test.size()), "suite-replay");
  for (std::size_t k = 0; k < s1.size(); k += 97) check(s1.at(k).image == s2.at(k).image, "suite-item");

  const Model corrected = attach_correction(trained.model, targets, CorrectionConfig(), Placement::AfterRelu);
  auto csv = [&](unsigned threads, std::size_t batch) {
    EvalOptions o;
    o.threads = threads;
    o.batch_size = batch;
    o.timing = false;
    std::ostringstream out;
    write_report_csv(out, evaluate(trained.model, corrected, test, specs, SeverityTable::defaults(), o), "acceptance");
    return out.str();
  };
  const auto one = csv(1, 200);
  check(one == csv(1, 200), "eval-rerun");
  check(one == csv(4, 33), "eval-threads");

  fs::remove_all(dir);
  report("store-and-replay", ok, ok ? "model/targets/dataset bit-exact, suite and report byte-identical" : "broken:" + detail);
}

}  // namespace

int main() {
  const std::vector<std::function<void()>> checks{transport_oracle,  barycenter_optimality, correction_exactness,
                                                   prior_monotonicity, targets_equivalence,  gradient_check,
                                                   desk_scale,        overhead_scaling,     store_and_replay};
  for (const auto& c : checks) {
    try {
      c();
    } catch (const std::exception& e) {
      report("exception", false, e.what());
    }
  }
  std::printf("%s: %d failing\n", failures == 0 ? "ACCEPTED" : "REJECTED", failures);
  return failures == 0 ? 0 : 1;
}
