#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "obed/entropy.hpp"
#include "obed/rng.hpp"

namespace {

using namespace obed;

constexpr double kStdNormalEntropy = 1.4189385332046727;  // (1/2) ln(2 pi e)

std::vector<double> normal_draws(std::size_t n, std::uint64_t seed, double mean = 0.0,
                                 double sd = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal(mean, sd);
  return v;
}

TEST(NormalEntropy, KnownValues) {
  EXPECT_NEAR(normal_entropy(1.0), kStdNormalEntropy, 1e-14);
  EXPECT_NEAR(normal_entropy(1e6), 8.3266938121868098, 1e-12);
  const double v = 0.37;
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(normal_entropy(e2 * v), normal_entropy(v) + 1.0, 1e-12);
  EXPECT_THROW(normal_entropy(0.0), std::invalid_argument);
  EXPECT_THROW(normal_entropy(-1.0), std::invalid_argument);
}

TEST(SpacingEntropy, NormalOracleAtLargeN) {
  const auto xs = normal_draws(100000, 21);
  EXPECT_NEAR(spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 0}), kStdNormalEntropy, 0.02);
  EXPECT_NEAR(spacing_entropy(xs, {EntropyEstimatorKind::vasicek, 0}), kStdNormalEntropy, 0.02);
}

TEST(SpacingEntropy, UniformOracleAtLargeN) {
  Rng rng(22);
  std::vector<double> xs(100000);
  for (double& x : xs) x = rng.uniform();
  EXPECT_NEAR(spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 0}), 0.0, 0.02);
  EXPECT_NEAR(spacing_entropy(xs, {EntropyEstimatorKind::vasicek, 0}), 0.0, 0.02);
}

TEST(SpacingEntropy, TranslationInvariance) {
  const auto xs = normal_draws(5000, 23, 0.0, 2.5);
  for (const double b : {-7.25, 0.5, 1e3}) {
    std::vector<double> shifted(xs);
    for (double& x : shifted) x += b;
    for (const auto kind : {EntropyEstimatorKind::ebrahimi, EntropyEstimatorKind::vasicek}) {
      const EntropyEstimator est{kind, 0};
      EXPECT_NEAR(spacing_entropy(shifted, est), spacing_entropy(xs, est), 1e-11);
    }
  }
}

TEST(SpacingEntropy, ScaleEquivariance) {
  const auto xs = normal_draws(5000, 24);
  for (const double a : {3.0, 0.125, -2.0}) {
    std::vector<double> scaled(xs);
    for (double& x : scaled) x *= a;
    for (const auto kind : {EntropyEstimatorKind::ebrahimi, EntropyEstimatorKind::vasicek}) {
      const EntropyEstimator est{kind, 0};
      EXPECT_NEAR(spacing_entropy(scaled, est), spacing_entropy(xs, est) + std::log(std::abs(a)),
                  1e-9);
    }
  }
}

TEST(SpacingEntropy, EbrahimiAtLeastVasicek) {
  Rng rng(25);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 4 + rng.uniform_below(997);
    std::vector<double> xs(n);
    for (double& x : xs) x = rng.normal(0.0, 1.0 + 5.0 * rng.uniform());
    const double he = spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 0});
    const double hv = spacing_entropy(xs, {EntropyEstimatorKind::vasicek, 0});
    EXPECT_GE(he, hv);
  }
}

TEST(SpacingEntropy, ConsistencyImprovesWithSampleSize) {
  for (const auto kind : {EntropyEstimatorKind::ebrahimi, EntropyEstimatorKind::vasicek}) {
    const EntropyEstimator est{kind, 0};
    std::vector<double> medians;
    for (const std::size_t n : {100u, 1000u, 10000u, 100000u}) {
      std::vector<double> errs;
      for (int t = 0; t < 50; ++t) {
        const auto xs = normal_draws(n, 2600 + t);
        errs.push_back(std::abs(spacing_entropy(xs, est) - kStdNormalEntropy));
      }
      std::sort(errs.begin(), errs.end());
      medians.push_back(0.5 * (errs[24] + errs[25]));
    }
    for (std::size_t i = 1; i < medians.size(); ++i) EXPECT_LT(medians[i], medians[i - 1]);
  }
}

TEST(SpacingEntropy, TiedSamplesStayFinite) {
  // all equal: every spacing hits the floor; result is large-negative but finite
  const std::vector<double> flat(64, 3.25);
  const double h = spacing_entropy(flat);
  EXPECT_TRUE(std::isfinite(h));
  EXPECT_LT(h, -100.0);

  // duplicates mixed with distinct values
  std::vector<double> mixed{1.0, 1.0, 1.0, 2.0, 2.0, 3.0, 4.0, 4.0};
  EXPECT_TRUE(std::isfinite(spacing_entropy(mixed)));
}

TEST(SpacingEntropy, SpacingParameterRules) {
  const auto xs = normal_draws(100, 27);
  // automatic m = round(sqrt(100)) = 10
  EXPECT_EQ(spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 0}),
            spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 10}));
  // N = 4 works with m = 1
  const std::vector<double> tiny{0.1, 0.9, 0.4, 0.2};
  EXPECT_TRUE(std::isfinite(spacing_entropy(tiny)));
  EXPECT_THROW(spacing_entropy(std::vector<double>{1.0, 2.0, 3.0}), std::invalid_argument);
  // explicit m must satisfy 1 <= m < N/2
  EXPECT_THROW(spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, 50}), std::invalid_argument);
  EXPECT_THROW(spacing_entropy(xs, {EntropyEstimatorKind::ebrahimi, -1}), std::invalid_argument);
}

TEST(SpacingEntropy, SortedVariantMatches) {
  auto xs = normal_draws(1000, 28);
  const double h = spacing_entropy(xs);
  std::sort(xs.begin(), xs.end());
  EXPECT_EQ(spacing_entropy_sorted(xs), h);
}

TEST(RowSorter, MatchesStdSortAcrossPatterns) {
  Rng rng(29);
  detail::RowSorter sorter;
  std::vector<double> row, sorted, expect;
  const std::size_t n = 512;

  auto check = [&](const std::vector<double>& values) {
    sorted.resize(values.size());
    sorter.sort_row(values, sorted);
    expect = values;
    std::sort(expect.begin(), expect.end());
    ASSERT_EQ(sorted, expect);
  };

  // random rows
  for (int t = 0; t < 10; ++t) {
    row.resize(n);
    for (double& x : row) x = rng.normal(0.0, 100.0);
    check(row);
  }
  // slowly drifting rows (the intended workload)
  row.resize(n);
  for (double& x : row) x = rng.normal(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    for (double& x : row) x += 1e-3 * rng.normal(0.0, 1.0);
    check(row);
  }
  // adversarial patterns
  row.resize(n);
  for (std::size_t i = 0; i < n; ++i) row[i] = static_cast<double>(i);
  check(row);
  std::reverse(row.begin(), row.end());
  check(row);
  std::fill(row.begin(), row.end(), 1.5);
  check(row);
  for (std::size_t i = 0; i < n; ++i) row[i] = static_cast<double>(i % 7);
  check(row);
  for (std::size_t i = 0; i < n; ++i) row[i] = (i % 2 ? 1.0 : -1.0) * static_cast<double>(i);
  check(row);
  // sign boundary and zeros
  row = {0.0, -0.0, 1.0, -1.0, 0.5, -0.5, 2.0, -2.0};
  check(row);
  // changing row length resets the permutation
  row.assign(33, 0.0);
  for (std::size_t i = 0; i < row.size(); ++i) row[i] = std::cos(static_cast<double>(i));
  check(row);
}

}  // namespace
