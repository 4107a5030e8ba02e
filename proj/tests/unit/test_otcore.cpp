#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "dwc/error.hpp"
#include "dwc/otcore.hpp"
#include "oracles.hpp"

using namespace dwc;

namespace {

template <typename F>
Errc code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no dwc::Error thrown";
  return Errc::Malformed;
}

// Barycenter objective: summed squared 2-Wasserstein distance, the cost whose
// 1D minimizer is the rank-wise mean.
double sum_w(const std::vector<double>& c, const std::vector<std::vector<double>>& samples) {
  double s = 0.0;
  for (const auto& m : samples) s += std::pow(wasserstein_1d(c, oracle::centered(m), 2.0), 2);
  return s;
}

double sum_w1(const std::vector<double>& c, const std::vector<std::vector<double>>& samples) {
  double s = 0.0;
  for (const auto& m : samples) s += wasserstein_1d(c, oracle::centered(m), 1.0);
  return s;
}

}  // namespace

TEST(SortWithIndices, SmallPermutation) {
  const std::vector<double> a{3, 1, 2};
  const auto v = sort_with_indices(a);
  EXPECT_EQ(v.values, (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(v.indices, (std::vector<std::size_t>{1, 2, 0}));
}

TEST(SortWithIndices, TiesKeepOriginalOrder) {
  const std::vector<double> a{5, 5, 5};
  const auto v = sort_with_indices(a);
  EXPECT_EQ(v.indices, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SortWithIndices, RoundTripOnRandomInput) {
  std::mt19937_64 rng(7);
  auto a = oracle::random_vector(rng, 100);
  a[10] = a[20] = a[30];
  const auto v = sort_with_indices(a);
  ASSERT_TRUE(std::is_sorted(v.values.begin(), v.values.end()));
  std::vector<std::size_t> seen(a.size(), 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++seen.at(v.indices[i]);
    EXPECT_EQ(v.values[i], a[v.indices[i]]);
  }
  EXPECT_TRUE(std::all_of(seen.begin(), seen.end(), [](std::size_t c) { return c == 1; }));
  std::vector<double> back(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) back[v.indices[i]] = v.values[i];
  EXPECT_EQ(back, a);
}

TEST(SortWithIndices, FloatOverloadMatchesDouble) {
  const std::vector<float> a{0.5f, -1.0f, 0.5f, 2.0f};
  const auto v = sort_with_indices(a);
  EXPECT_EQ(v.indices, (std::vector<std::size_t>{1, 0, 2, 3}));
}

TEST(SortWithIndices, RejectsNonFiniteAndEmpty) {
  const std::vector<double> nan{1.0, std::nan(""), 2.0};
  const std::vector<double> inf{1.0, INFINITY};
  EXPECT_EQ(code_of([&] { sort_with_indices(nan); }), Errc::NonFinite);
  EXPECT_EQ(code_of([&] { sort_with_indices(inf); }), Errc::NonFinite);
  EXPECT_EQ(code_of([] { sort_with_indices(std::vector<double>{}); }), Errc::Empty);
}

TEST(Center, Examples) {
  EXPECT_EQ(center(std::vector<double>{1, 2, 3}), (std::vector<double>{-1, 0, 1}));
  EXPECT_EQ(center(std::vector<double>{0, 0, 0, 4}), (std::vector<double>{-1, -1, -1, 3}));
  const auto z = center(std::vector<double>(10000, 1.0));
  EXPECT_TRUE(std::all_of(z.begin(), z.end(), [](double v) { return v == 0.0; }));
}

TEST(Center, MeanIsZeroWithinTolerance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_vector(rng, 1000, -1e3, 1e3);
    const auto c = center(a);
    double m = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      m += c[i];
      mx = std::max(mx, std::abs(a[i]));
    }
    EXPECT_LE(std::abs(m / 1000.0), 1e-6 * (1 + mx));
  }
}

TEST(Center, Errors) {
  EXPECT_EQ(code_of([] { center(std::vector<double>{}); }), Errc::Empty);
  EXPECT_EQ(code_of([] { center(std::vector<double>{NAN}); }), Errc::NonFinite);
}

TEST(Wasserstein, Examples) {
  EXPECT_EQ(wasserstein_1d(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0, 1}, std::vector<double>{1, 2}, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(oracle::brute_force_matching({0, 1}, {1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(wasserstein_1d(std::vector<double>{0, 4}, std::vector<double>{0, 0}, 2.0), 4.0);
  EXPECT_DOUBLE_EQ(oracle::brute_force_matching({0, 4}, {0, 0}, 2.0), 4.0);
}

TEST(Wasserstein, MatchesBruteForceMatching) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 1 + rng() % 7;
    const auto a = oracle::random_vector(rng, n);
    const auto b = oracle::random_vector(rng, n);
    EXPECT_NEAR(wasserstein_1d(a, b, 1.0), oracle::brute_force_matching(a, b, 1.0), 1e-9);
    EXPECT_NEAR(wasserstein_1d(a, b, 2.0), oracle::brute_force_matching(a, b, 2.0), 1e-9);
  }
}

TEST(Wasserstein, MetricProperties) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 30;
    const auto a = oracle::random_vector(rng, n), b = oracle::random_vector(rng, n), c = oracle::random_vector(rng, n);
    const double ab = wasserstein_1d(a, b), ba = wasserstein_1d(b, a);
    EXPECT_GE(ab, 0.0);
    EXPECT_EQ(wasserstein_1d(a, a), 0.0);
    EXPECT_NEAR(ab, ba, 1e-12);
    EXPECT_LE(ab, wasserstein_1d(a, c) + wasserstein_1d(c, b) + 1e-9);
  }
}

TEST(Wasserstein, PermutationInvarianceIsBitExact) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    auto a = oracle::random_vector(rng, 64), b = oracle::random_vector(rng, 64);
    const double before = wasserstein_1d(a, b);
    std::shuffle(a.begin(), a.end(), rng);
    std::shuffle(b.begin(), b.end(), rng);
    EXPECT_EQ(wasserstein_1d(a, b), before);
  }
}

TEST(Wasserstein, Errors) {
  EXPECT_EQ(code_of([] { wasserstein_1d(std::vector<double>{1}, std::vector<double>{1, 2}); }), Errc::LengthMismatch);
  EXPECT_EQ(code_of([] { wasserstein_1d(std::vector<double>{NAN}, std::vector<double>{1}); }), Errc::NonFinite);
  EXPECT_EQ(code_of([] { wasserstein_1d(std::vector<double>{1}, std::vector<double>{1}, 0.5); }), Errc::InvalidConfig);
}

TEST(Barycenter, Examples) {
  const std::vector<std::vector<double>> s1{{0, 2}, {1, 3}};
  const auto t1 = barycenter(s1, "x");
  EXPECT_EQ(t1.t, (std::vector<double>{-1, 1}));
  EXPECT_EQ(t1.variance, (std::vector<double>{0, 0}));
  EXPECT_EQ(t1.sample_count, 2u);

  const std::vector<std::vector<double>> s2{{0, 4}, {2, 2}};
  const auto t2 = barycenter(s2);
  EXPECT_EQ(t2.t, (std::vector<double>{-1, 1}));
  EXPECT_EQ(t2.variance, (std::vector<double>{1, 1}));
}

TEST(Barycenter, ExampleIsGridOptimal) {
  const std::vector<std::vector<double>> s{{0, 2}, {1, 3}};
  const double at_t = sum_w({-1, 1}, s);
  for (double x = -3; x <= 3; x += 0.25) {
    for (double y = -3; y <= 3; y += 0.25) EXPECT_LE(at_t, sum_w(oracle::centered({x, y}), s) + 1e-12);
  }
}

TEST(Barycenter, IdenticalSamplesGiveZeroVariance) {
  std::mt19937_64 rng(1);
  const auto v = oracle::random_vector(rng, 9);
  const std::vector<std::vector<double>> s(5, v);
  const auto t = barycenter(s);
  auto expect = oracle::centered(v);
  std::sort(expect.begin(), expect.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_NEAR(t.t[i], expect[i], 1e-12);
    EXPECT_LE(t.variance[i], 1e-28);
  }
}

TEST(Barycenter, BeatsRandomCenteredCandidates) {
  std::mt19937_64 rng(21);
  for (int inst = 0; inst < 40; ++inst) {
    const std::size_t n = 1 + rng() % 4, m = 1 + rng() % 3;
    std::vector<std::vector<double>> s;
    for (std::size_t k = 0; k < m; ++k) s.push_back(oracle::random_vector(rng, n));
    const auto t = barycenter(s);
    const double best = sum_w(t.t, s);
    for (int c = 0; c < 300; ++c) EXPECT_LE(best, sum_w(oracle::centered(oracle::random_vector(rng, n)), s) + 1e-9);
  }
}

TEST(Barycenter, RankwiseMeanIsNotTheW1Minimizer) {
  // three samples: the rank-wise median does strictly better than the mean
  const std::vector<std::vector<double>> s{{-1, 1}, {-1, 1}, {-4, 4}};
  const auto t = barycenter(s);
  EXPECT_EQ(t.t, (std::vector<double>{-2, 2}));
  EXPECT_LT(sum_w1({-1, 1}, s), sum_w1(t.t, s));
  EXPECT_LT(sum_w(t.t, s), sum_w({-1, 1}, s));
}

TEST(Barycenter, OutputIsSortedMeanZeroAndValid) {
  std::mt19937_64 rng(2);
  std::vector<std::vector<double>> s;
  for (int k = 0; k < 50; ++k) s.push_back(oracle::random_vector(rng, 31, -5, 20));
  const auto t = barycenter(s, "layer");
  EXPECT_TRUE(std::is_sorted(t.t.begin(), t.t.end()));
  double m = 0.0;
  for (double v : t.t) m += v;
  EXPECT_LE(std::abs(m / 31.0), 1e-5);
  EXPECT_NO_THROW(t.validate());
}

TEST(Barycenter, Errors) {
  EXPECT_EQ(code_of([] { barycenter(std::vector<std::vector<double>>{}); }), Errc::Empty);
  const std::vector<std::vector<double>> bad{{1, 2}, {1, 2, 3}};
  EXPECT_EQ(code_of([&] { barycenter(bad); }), Errc::LengthMismatch);
}

TEST(TargetDistribution, ValidateCatchesBrokenInvariants) {
  TargetDistribution t{"x", {-1, 1}, {0, 0}, 1};
  EXPECT_NO_THROW(t.validate());
  auto unsorted = t;
  unsorted.t = {1, -1};
  EXPECT_EQ(code_of([&] { unsorted.validate(); }), Errc::InvalidConfig);
  auto shifted = t;
  shifted.t = {0, 2};
  EXPECT_EQ(code_of([&] { shifted.validate(); }), Errc::InvalidConfig);
  auto negative = t;
  negative.variance = {0, -1e-3};
  EXPECT_EQ(code_of([&] { negative.validate(); }), Errc::InvalidConfig);
  auto short_var = t;
  short_var.variance = {0};
  EXPECT_EQ(code_of([&] { short_var.validate(); }), Errc::InvalidConfig);
}

TEST(ChannelDissimilarity, ScaledOutlierWins) {
  const ChannelActivations q{{1, 2, 3}, {0, 1, 0}};
  ChannelActivations scaled = q;
  for (auto& ch : scaled) {
    for (double& v : ch) v *= 10;
  }
  std::vector<ChannelActivations> data{q, q, q, scaled, q};
  EXPECT_EQ(channel_dissimilarity(0, data), 3u);
}

TEST(ChannelDissimilarity, MatchesDirectFormula) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ChannelActivations> data(3);
    for (auto& s : data) {
      s = {oracle::random_vector(rng, 6), oracle::random_vector(rng, 6), oracle::random_vector(rng, 6)};
    }
    auto dist = [&](std::size_t m) {
      double total = 0.0;
      for (std::size_t c = 0; c < 3; ++c) total += oracle::brute_force_matching(data[0][c], data[m][c]);
      return total;
    };
    const std::size_t expect = dist(1) >= dist(2) ? 1 : 2;
    EXPECT_EQ(channel_dissimilarity(0, data), expect);
  }
}

TEST(ChannelDissimilarity, TiesGoToLowestCandidate) {
  const ChannelActivations q{{1, 2}};
  std::vector<ChannelActivations> data(4, q);
  EXPECT_EQ(channel_dissimilarity(0, data), 1u);
  EXPECT_EQ(channel_dissimilarity(2, data), 0u);
}

TEST(ChannelDissimilarity, Errors) {
  std::vector<ChannelActivations> data{{{1, 2}}, {{1, 2}}};
  EXPECT_EQ(code_of([&] { channel_dissimilarity(2, data); }), Errc::IndexOutOfRange);
  data.push_back({{1, 2, 3}});
  EXPECT_EQ(code_of([&] { channel_dissimilarity(0, data); }), Errc::ShapeMismatch);
  std::vector<ChannelActivations> wide{{{1}, {2}}, {{1}}};
  EXPECT_EQ(code_of([&] { channel_dissimilarity(0, wide); }), Errc::ShapeMismatch);
}
