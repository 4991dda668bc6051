#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <map>
#include <set>
#include <numeric>

#include "qmatch/oracles.hpp"
#include "qmatch/quant_loss.hpp"
#include "support.hpp"

using namespace qmatch;
using namespace qmatch::testing;

namespace {

std::vector<int> class_labels(std::size_t classes, std::size_t per_class) {
  std::vector<int> labels;
  for (std::size_t c = 0; c < classes; ++c) labels.insert(labels.end(), per_class, static_cast<int>(c));
  return labels;
}

Points shifted(const Points& p, std::span<const double> c) {
  Points out = p;
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t k = 0; k < p.dim(); ++k) out(i, k) += c[k];
  return out;
}

}  // namespace

TEST(SelectReferences, ClassBalanced) {
  Rng rng(1);
  const PointCloud src(random_points(rng, 600, 2));
  const auto labels = class_labels(6, 100);
  const auto refs = select_references(src, std::span<const int>(labels), 60, 3);
  ASSERT_EQ(refs.size(), 60u);
  ASSERT_TRUE(refs.labels);
  std::map<int, int> per_class;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto i = refs.source_indices[r];
    EXPECT_EQ((*refs.labels)[r], labels[i]);
    ++per_class[labels[i]];
    for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(refs.quantiles(r, k), src.points()(i, k));
    const auto u = oracles::quantile_index_direct(src.points(), refs.quantiles.row(r));
    EXPECT_LE(max_abs_diff(u, refs.targets.row(r)), 1e-13);
  }
  for (const auto& [c, count] : per_class) EXPECT_EQ(count, 10) << "class " << c;
  std::set<std::size_t> unique(refs.source_indices.begin(), refs.source_indices.end());
  EXPECT_EQ(unique.size(), 60u);
}

TEST(SelectReferences, ExhaustiveAndDeterministic) {
  Rng rng(2);
  const PointCloud src(random_points(rng, 25, 3));
  const auto all = select_references(src, std::nullopt, 25, 9);
  std::vector<std::size_t> idx = all.source_indices;
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < 25; ++i) EXPECT_EQ(idx[i], i);

  const auto a = select_references(src, std::nullopt, 10, 4);
  const auto b = select_references(src, std::nullopt, 10, 4);
  EXPECT_EQ(a.source_indices, b.source_indices);
  EXPECT_EQ(a.targets, b.targets);
  EXPECT_NE(a.source_indices, select_references(src, std::nullopt, 10, 5).source_indices);
}

TEST(SelectReferences, Errors) {
  Rng rng(3);
  const PointCloud src(random_points(rng, 30, 2));
  EXPECT_THROW(select_references(src, std::nullopt, 31, 0), InvalidArgument);
  EXPECT_THROW(select_references(src, std::nullopt, 0, 0), InvalidArgument);
  const auto labels = class_labels(3, 10);
  EXPECT_THROW(select_references(src, std::span<const int>(labels), 20, 0), InvalidArgument);
  std::vector<int> skewed(30, 0);
  skewed[0] = 1;  // class 1 has a single point
  EXPECT_THROW(select_references(src, std::span<const int>(skewed), 4, 0), InvalidArgument);
  const std::vector<int> short_labels(10, 0);
  EXPECT_THROW(select_references(src, std::span<const int>(short_labels), 4, 0), DimensionMismatch);
}

TEST(QuantileLoss, ZeroForEqualMultisets) {
  Rng rng(4);
  const Points p = random_points(rng, 40, 3);
  const auto refs = select_references(PointCloud(p), std::nullopt, 12, 1);
  EXPECT_LE(quantile_loss(p, refs).total, 1e-30);
  std::vector<std::size_t> order(40);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  EXPECT_LE(quantile_loss(p.gather(order), refs).total, 1e-12);
}

TEST(QuantileLoss, ShiftedCloudMatchesDefinitionalOracle) {
  Rng rng(5);
  const Points src = random_points(rng, 50, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 5, 2);
  const Points adapted = shifted(src, Vec{10.0, 0.0});
  const auto got = quantile_loss(adapted, refs);
  const double want = oracles::quantile_loss_direct(adapted, src, refs.source_indices);
  EXPECT_GT(got.total, 0.1);
  EXPECT_NEAR(got.total, want, 1e-12);
}

TEST(QuantileLoss, BreakdownInvariant) {
  Rng rng(6);
  const Points src = random_points(rng, 30, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 8, 3);
  BatchStatRegularizer reg{0.3, coordinate_mean(src), coordinate_std(src)};
  const Points adapted = random_points(rng, 30, 2, 1.5);
  const auto b = quantile_loss(adapted, refs, reg);
  ASSERT_EQ(b.per_reference.size(), refs.size());
  double mean = 0.0;
  for (double v : b.per_reference) {
    EXPECT_GE(v, 0.0);
    mean += v / static_cast<double>(refs.size());
  }
  EXPECT_NEAR(b.total, mean + reg.weight * b.regularizer, 1e-10);
  EXPECT_NEAR(b.regularizer, batch_stat_penalty(adapted, reg.source_mean, reg.source_std), 1e-14);
}

TEST(QuantileLoss, CoincidentReferenceUsesRenormalizedAverage) {
  Rng rng(7);
  const Points src = random_points(rng, 20, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 20, 0);
  Points adapted = random_points(rng, 20, 2);
  // Put one adapted point exactly on a reference.
  for (std::size_t k = 0; k < 2; ++k) adapted(3, k) = refs.quantiles(0, k);
  EXPECT_NEAR(quantile_loss(adapted, refs).total,
              oracles::quantile_loss_direct(adapted, src, refs.source_indices), 1e-12);
  EXPECT_NEAR(composite_quantile_loss(adapted, refs), quantile_loss(adapted, refs).total, 1e-12);
}

TEST(QuantileLoss, SeedIrrelevantWhenAllPointsAreReferences) {
  Rng rng(8);
  const Points src = random_points(rng, 30, 3);
  const Points adapted = random_points(rng, 30, 3, 1.2);
  const double a = quantile_loss(adapted, select_references(PointCloud(src), std::nullopt, 30, 1)).total;
  const double b = quantile_loss(adapted, select_references(PointCloud(src), std::nullopt, 30, 99)).total;
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(QuantileLoss, DimensionErrors) {
  Rng rng(9);
  const Points src = random_points(rng, 10, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 4, 0);
  EXPECT_THROW(quantile_loss(random_points(rng, 10, 3), refs), DimensionMismatch);
  EXPECT_THROW(quantile_loss(Points(0, 2), refs), InvalidArgument);
}

TEST(HrGr, HandValues) {
  const Vec h = h_r(Vec{0, 0}, Vec{3, 4});
  EXPECT_DOUBLE_EQ(h[0], 0.6);
  EXPECT_DOUBLE_EQ(h[1], 0.8);
  EXPECT_THROW(h_r(Vec{1, 1}, Vec{1, 1}), DegenerateInput);
  EXPECT_EQ(g_r(Vec{0.2, -0.1}, Vec{0.2, -0.1}), 0.0);
  EXPECT_DOUBLE_EQ(g_r(Vec{1, 0}, Vec{0, 0}), 1.0);
}

// The index at z averages (z - x_i)/|z - x_i|, and h_r(x_i, z) is the unit
// vector from x_i toward z, i.e. the same vector. The stored index is
// therefore +mean h_r; the negated orientation must not match.
TEST(HrGr, IndexOrientation) {
  Rng rng(10);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 5 + rng.below(30), d = 2 + rng.below(4);
    const PointCloud c(random_points(rng, n, d));
    const Vec z = random_vec(rng, d);
    Vec mean_h(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec h = h_r(c.row(i), z);
      for (std::size_t k = 0; k < d; ++k) mean_h[k] += h[k] / static_cast<double>(n);
    }
    const Vec u = quantile_index(c, z).value();
    EXPECT_LE(max_abs_diff(u, mean_h), 1e-14);
    Vec neg = mean_h;
    for (double& v : neg) v = -v;
    EXPECT_GT(max_abs_diff(u, neg), 1e-3);
  }
}

TEST(Composite, DecompositionIdentity) {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 5 + rng.below(40), d = 1 + rng.below(5);
    const Points src = random_points(rng, n, d);
    const auto refs = select_references(PointCloud(src), std::nullopt, 1 + rng.below(n), rng.next_u64());
    const Points adapted = random_points(rng, n + rng.below(5), d, 1.3);
    EXPECT_NEAR(composite_quantile_loss(adapted, refs), quantile_loss(adapted, refs).total, 1e-12);
  }
}

TEST(Composite, BatchMeansAndFullGradientAgree) {
  Rng rng(12);
  const Points src = random_points(rng, 25, 3);
  const auto refs = select_references(PointCloud(src), std::nullopt, 7, 1);
  const Points adapted = random_points(rng, 25, 3, 1.4);
  const Points avgs = batch_direction_means(adapted, refs);
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto u = oracles::quantile_index_direct(adapted, refs.quantiles.row(r));
    EXPECT_LE(max_abs_diff(avgs.row(r), u), 1e-14);
  }
  const Points g1 = composite_feature_grad(adapted, refs, avgs);
  const Points g2 = quantile_loss_grad(adapted, refs);
  EXPECT_LE(max_abs_diff(g1.data(), g2.data()), 1e-14);
}

TEST(QuantileLossGrad, ZeroAtSource) {
  Rng rng(13);
  const Points src = random_points(rng, 30, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 6, 0);
  const Points g = quantile_loss_grad(src, refs);
  for (double v : g.data()) EXPECT_EQ(v, 0.0);
}

TEST(QuantileLossGrad, FiniteDifferences) {
  Rng rng(14);
  auto check = [&](std::size_t n, std::size_t d, double w) {
    const Points src = random_points(rng, n, d);
    const auto refs = select_references(PointCloud(src), std::nullopt, std::min<std::size_t>(n, 1 + rng.below(10)),
                                        rng.next_u64());
    BatchStatRegularizer reg;
    if (w > 0) reg = {w, coordinate_mean(src), coordinate_std(src)};
    const Points adapted = random_points(rng, n, d, 1.3);
    const Points g = quantile_loss_grad(adapted, refs, reg);
    const auto fd = oracles::finite_diff_grad(
        [&](std::span<const double> x) {
          return quantile_loss(Points(n, d, std::vector<double>(x.begin(), x.end())), refs, reg).total;
        },
        adapted.data());
    return oracles::relative_error(fd, g.data());
  };
  EXPECT_LT(check(20, 3, 0.0), 1e-4);
  for (int t = 0; t < 50; ++t) {
    const std::size_t n = 2 + rng.below(49), d = 1 + rng.below(8);
    EXPECT_LT(check(n, d, t % 3 == 0 ? 0.2 : 0.0), 1e-4) << "instance " << t;
  }
}

TEST(QuantileLossGrad, TranslationAwayIncreasesLoss) {
  Rng rng(15);
  const Points src = random_points(rng, 40, 2);
  const auto refs = select_references(PointCloud(src), std::nullopt, 10, 0);
  const Points g = quantile_loss_grad(shifted(src, Vec{0.7, 0.0}), refs);
  double e1 = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) e1 += g(i, 0);
  EXPECT_GT(e1, 0.0);
}

TEST(BatchStatPenalty, HandValues) {
  Rng rng(16);
  const Points src = random_points(rng, 50, 3);
  const Vec m = coordinate_mean(src), s = coordinate_std(src);
  EXPECT_NEAR(batch_stat_penalty(src, m, s), 0.0, 1e-28);
  const Vec c{1.0, -2.0, 0.5};
  EXPECT_NEAR(batch_stat_penalty(shifted(src, c), m, s), dot(c, c), 1e-12);
  Points wide = src;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t k = 0; k < 3; ++k) wide(i, k) = 2.0 * (src(i, k) - m[k]) + m[k];
  EXPECT_NEAR(batch_stat_penalty(wide, m, s), dot(s, s), 1e-12);
  EXPECT_THROW(batch_stat_penalty(Points(1, 3), m, s), InvalidArgument);
}

TEST(BatchStatPenalty, GradientFiniteDifferences) {
  Rng rng(17);
  const Points src = random_points(rng, 12, 2);
  const Vec m = coordinate_mean(src), s = coordinate_std(src);
  const Points x = random_points(rng, 12, 2, 2.0);
  const Points g = batch_stat_penalty_grad(x, m, s);
  const auto fd = oracles::finite_diff_grad(
      [&](std::span<const double> v) {
        return batch_stat_penalty(Points(12, 2, std::vector<double>(v.begin(), v.end())), m, s);
      },
      x.data());
  EXPECT_LT(oracles::relative_error(fd, g.data()), 1e-6);
}
