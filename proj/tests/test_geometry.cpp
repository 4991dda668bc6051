#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "qmatch/geometry.hpp"
#include "qmatch/oracles.hpp"
#include "support.hpp"

using namespace qmatch;
using namespace qmatch::testing;

namespace {

PointCloud cloud_of(std::initializer_list<Vec> rows) { return PointCloud::from_rows(rows); }

// Mean of |Z_i - Q| + <u, Z_i - Q>, written out independently of phi_loss.
double direct_loss_1d(const std::vector<double>& z, double u, double q) {
  double s = 0.0;
  for (double x : z) s += std::abs(x - q) + u * (x - q);
  return s / static_cast<double>(z.size());
}

}  // namespace

TEST(Phi, HandValues) {
  EXPECT_DOUBLE_EQ(phi(Vec{0, 0}, Vec{3, 4}), 5.0);
  EXPECT_DOUBLE_EQ(phi(Vec{1, 0}, Vec{-2, 0}), 0.0);
  EXPECT_DOUBLE_EQ(phi(Vec{0.5, 0}, Vec{2, 0}), 3.0);
  EXPECT_THROW(phi(Vec{0, 0}, Vec{1, 2, 3}), DimensionMismatch);
}

TEST(Phi, NonNegativeInsideBall) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    const Vec u = random_index(rng, 3, rng.uniform());
    EXPECT_GE(phi(u, random_vec(rng, 3, 5.0)), 0.0);
  }
}

TEST(PhiLoss, HandValues) {
  const auto c = cloud_of({{-1, 0}, {1, 0}});
  EXPECT_DOUBLE_EQ(phi_loss(c, Vec{0, 0}, Vec{0, 0}), 1.0);
  EXPECT_NEAR(phi_loss(c, Vec{0, 0}, Vec{0, 1}), std::sqrt(2.0), 1e-15);
  EXPECT_THROW(phi_loss(c, Vec{0, 0}, Vec{0}), DimensionMismatch);
}

TEST(PhiLoss, MedianBeatsEveryCloudPoint) {
  Rng rng(2);
  const PointCloud c(random_points(rng, 40, 3));
  const Vec zero(3, 0.0);
  const auto rep = geometric_quantile(c, QuantileIndex(zero));
  const double at_median = phi_loss(c, zero, rep.quantile);
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LE(at_median, phi_loss(c, zero, c.row(i)) + 1e-12);
}

TEST(PhiLoss, ConvexAlongSegments) {
  Rng rng(3);
  const PointCloud c(random_points(rng, 30, 4));
  for (int t = 0; t < 10; ++t) {
    const Vec u = random_index(rng, 4, 0.9 * rng.uniform());
    const Vec a = random_vec(rng, 4, 2.0), b = random_vec(rng, 4, 2.0);
    for (double s : {0.1, 0.3, 0.5, 0.7}) {
      Vec m(4);
      for (int k = 0; k < 4; ++k) m[k] = (1 - s) * a[k] + s * b[k];
      const double mix = (1 - s) * phi_loss(c, u, a) + s * phi_loss(c, u, b);
      EXPECT_LE(phi_loss(c, u, m), mix + 1e-12);
    }
  }
}

TEST(PointCloud, Invariants) {
  EXPECT_THROW(PointCloud(Points(1, 2)), InvalidArgument);
  EXPECT_THROW(PointCloud(Points(3, 0)), InvalidArgument);
  EXPECT_THROW(cloud_of({{1, 1}, {1, 1}, {1, 1}}), DegenerateInput);
  EXPECT_THROW(cloud_of({{1, std::numeric_limits<double>::quiet_NaN()}, {0, 0}}), InvalidArgument);
  EXPECT_NO_THROW(cloud_of({{1, 1}, {1, 1}, {1, 2}}));
}

TEST(QuantileIndex, Validation) {
  EXPECT_NO_THROW(QuantileIndex(Vec{1.0, 0.0}));
  EXPECT_NO_THROW(QuantileIndex(Vec{1.0 + 5e-10, 0.0}));
  EXPECT_THROW(QuantileIndex(Vec{1.1, 0.0}), InvalidArgument);
  EXPECT_THROW(QuantileIndex(Vec{std::numeric_limits<double>::infinity()}), InvalidArgument);
}

TEST(QuantileIndexFn, HandValues) {
  auto at = [](const PointCloud& c, Vec z) { return quantile_index(c, z).value(); };
  const auto sym = at(cloud_of({{-1, 0}, {1, 0}}), {0, 0});
  EXPECT_NEAR(sym[0], 0.0, 1e-15);
  EXPECT_NEAR(sym[1], 0.0, 1e-15);
  // On a data point: the coincident point is dropped and the mean is over n-1.
  const auto edge = at(cloud_of({{0, 0}, {4, 0}}), {4, 0});
  EXPECT_DOUBLE_EQ(edge[0], 1.0);
  EXPECT_DOUBLE_EQ(edge[1], 0.0);
  const auto square = at(cloud_of({{0, 0}, {2, 0}, {0, 2}, {2, 2}}), {1, 1});
  EXPECT_NEAR(square[0], 0.0, 1e-15);
  EXPECT_NEAR(square[1], 0.0, 1e-15);
}

TEST(QuantileIndexFn, TiedCoincidentPointsAllDropped) {
  const auto c = cloud_of({{0, 0}, {0, 0}, {3, 0}, {0, 4}});
  const auto u = quantile_index(c, Vec{0, 0}).value();
  // Remaining points (3,0) and (0,4) point away from z = origin.
  EXPECT_DOUBLE_EQ(u[0], -0.5);
  EXPECT_DOUBLE_EQ(u[1], -0.5);
}

TEST(QuantileIndexFn, DegenerateBlock) {
  const QuantileIndexField f(Points::from_rows({{1, 1}, {1, 1}}));
  EXPECT_THROW(f.at(Vec{1, 1}), DegenerateInput);
}

TEST(QuantileIndexFn, MatchesDirectOracleAndUnitBall) {
  Rng rng(4);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 2 + rng.below(60), d = 1 + rng.below(9);
    const PointCloud c(random_points(rng, n, d));
    // Some probes sit on a data point to exercise the coincidence rule.
    Vec probe = random_vec(rng, d);
    if (rng.uniform() < 0.2) {
      const auto row = c.row(rng.below(n));
      probe.assign(row.begin(), row.end());
    }
    const auto fast = quantile_index(c, probe);
    const auto slow = oracles::quantile_index_direct(c.points(), probe);
    EXPECT_LE(max_abs_diff(fast.value(), slow), 1e-13);
    EXPECT_LE(fast.norm(), 1.0 + 1e-9);
  }
}

TEST(QuantileIndexFn, Equivariances) {
  Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + rng.below(40), d = 2 + rng.below(6);
    const Points p = random_points(rng, n, d);
    const PointCloud c(p);
    const Vec z = random_vec(rng, d);
    const Vec base = quantile_index(c, z).value();

    const Vec shift = random_vec(rng, d, 3.0);
    Points moved = p;
    Vec zs = z;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) moved(i, k) += shift[k];
    for (std::size_t k = 0; k < d; ++k) zs[k] += shift[k];
    EXPECT_LE(max_abs_diff(quantile_index(PointCloud(moved), zs).value(), base), 1e-12);

    const auto r = random_orthogonal(rng, d);
    Points rotated(n, d);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec y = mat_vec(r, p.row(i));
      std::copy(y.begin(), y.end(), rotated.row(i).begin());
    }
    EXPECT_LE(max_abs_diff(quantile_index(PointCloud(rotated), mat_vec(r, z)).value(), mat_vec(r, base)), 1e-9);

    const double s = std::exp(rng.uniform(-3.0, 3.0));
    Points scaled = p;
    for (double& v : scaled.data()) v *= s;
    Vec zz = z;
    for (double& v : zz) v *= s;
    EXPECT_LE(max_abs_diff(quantile_index(PointCloud(scaled), zz).value(), base), 1e-9);
  }
}

TEST(Solver, SymmetricSquareMedian) {
  const auto c = cloud_of({{0, 0}, {2, 0}, {0, 2}, {2, 2}});
  const auto rep = geometric_quantile(c, QuantileIndex(Vec{0, 0}));
  EXPECT_TRUE(rep.converged);
  EXPECT_NEAR(rep.quantile[0], 1.0, 1e-9);
  EXPECT_NEAR(rep.quantile[1], 1.0, 1e-9);
}

TEST(Solver, OneDimensionalGridOracle) {
  std::vector<double> z(101);
  Points p(101, 1);
  for (int i = 0; i <= 100; ++i) p(i, 0) = z[i] = i / 100.0;
  const auto rep = geometric_quantile(PointCloud(p), QuantileIndex(Vec{0.5}));
  double best = 0.0, best_loss = std::numeric_limits<double>::infinity();
  for (int g = 0; g <= 10000; ++g) {
    const double q = g * 1e-4;
    const double l = direct_loss_1d(z, 0.5, q);
    if (l < best_loss) best_loss = l, best = q;
  }
  EXPECT_NEAR(rep.quantile[0], best, 1e-4);
  EXPECT_NEAR(rep.quantile[0], 0.75, 1e-4);
  EXPECT_TRUE(rep.optimal);
}

TEST(Solver, RoundTripAndMonotoneLoss) {
  Rng rng(6);
  for (int t = 0; t < 40; ++t) {
    const std::size_t n = 10 + rng.below(100), d = 2 + rng.below(8);
    const PointCloud c(random_points(rng, n, d));
    const QuantileIndex u(random_index(rng, d, 0.9 * rng.uniform()));
    const auto rep = geometric_quantile(c, u, {.record_history = true});
    EXPECT_TRUE(rep.converged);
    EXPECT_LE(rep.residual, 1e-8);
    const auto back = oracles::quantile_index_direct(c.points(), rep.quantile);
    EXPECT_LE(max_abs_diff(back, u.value()), 1e-6);
    ASSERT_FALSE(rep.loss_history.empty());
    for (std::size_t i = 1; i < rep.loss_history.size(); ++i)
      EXPECT_LE(rep.loss_history[i], rep.loss_history[i - 1] + 1e-12);
    EXPECT_NEAR(rep.loss_history.back(), phi_loss(c, u.value(), rep.quantile), 1e-12);
  }
}

TEST(Solver, OneDimensionalMatchesSortedQuantile) {
  Rng rng(8);
  for (int s = 0; s < 5; ++s) {
    const std::size_t n = 30 + rng.below(70);
    Points p = random_points(rng, n, 1);
    std::vector<double> sorted(p.data());
    std::sort(sorted.begin(), sorted.end());
    double gap = 0.0;
    for (std::size_t i = 1; i < n; ++i) gap = std::max(gap, sorted[i] - sorted[i - 1]);
    for (double u : {-0.8, -0.5, 0.0, 0.5, 0.8}) {
      const double q = geometric_quantile(PointCloud(p), QuantileIndex(Vec{u})).quantile[0];
      const double level = (1.0 + u) / 2.0;
      const auto idx = static_cast<std::size_t>(std::clamp(std::ceil(level * n) - 1.0, 0.0, n - 1.0));
      EXPECT_LE(std::abs(q - sorted[idx]), gap) << "u=" << u;
    }
  }
}

TEST(Solver, RejectsBoundaryIndex) {
  const auto c = cloud_of({{0, 0}, {1, 0}, {0, 1}});
  EXPECT_THROW(geometric_quantile(c, QuantileIndex(Vec{1.0, 0.0})), InvalidArgument);
  EXPECT_THROW(geometric_quantile(c, QuantileIndex(Vec{0.0, 0.0, 0.0})), DimensionMismatch);
}

TEST(Solver, ReportsNonConvergence) {
  Rng rng(10);
  const PointCloud c(random_points(rng, 50, 5));
  const auto rep = geometric_quantile(c, QuantileIndex(random_index(rng, 5, 0.8)), {.max_iterations = 1});
  EXPECT_FALSE(rep.converged);
  EXPECT_GT(rep.residual, 1e-8);
}

TEST(Solver, CollinearCloudFlagsNonUniqueness) {
  Points p(6, 2);
  for (int i = 0; i < 6; ++i) p(i, 0) = p(i, 1) = i;
  const auto rep = geometric_quantile(PointCloud(p), QuantileIndex(Vec{0.0, 0.0}));
  EXPECT_TRUE(rep.non_unique_risk);
  Rng rng(11);
  EXPECT_FALSE(geometric_quantile(PointCloud(random_points(rng, 6, 2)), QuantileIndex(Vec{0, 0})).non_unique_risk);
}
