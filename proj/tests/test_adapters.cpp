#include <gtest/gtest.h>

#include <cmath>

#include "qmatch/adapters.hpp"
#include "qmatch/oracles.hpp"
#include "support.hpp"

using namespace qmatch;
using namespace qmatch::testing;

namespace {

Adapter randomized(Adapter a, Rng& rng, double scale) {
  for (double& p : a.mutable_params()) p += scale * rng.normal();
  return a;
}

double upstream_dot(const Vec& y, const Vec& w) { return dot(y, w); }

}  // namespace

TEST(Adapter, KindNames) {
  for (auto k : {AdapterKind::identity, AdapterKind::affine, AdapterKind::mlp1})
    EXPECT_EQ(parse_adapter_kind(to_string(k)), k);
  for (auto k : {FeatureKind::identity, FeatureKind::fixed_affine, FeatureKind::fixed_mlp})
    EXPECT_EQ(parse_feature_kind(to_string(k)), k);
  EXPECT_THROW(parse_adapter_kind("conv"), InvalidArgument);
  EXPECT_THROW(parse_feature_kind("resnet"), InvalidArgument);
}

TEST(Adapter, ForwardHandValues) {
  const Vec x{3, -1};
  EXPECT_EQ(Adapter::identity(2).forward(x), x);
  EXPECT_EQ(Adapter::affine(2).forward(x), x);
  const std::vector<double> rot{0, -1, 1, 0};
  const std::vector<double> zero{0, 0};
  const Vec y = Adapter::affine(2, rot, zero).forward(Vec{1, 0});
  EXPECT_EQ(y, (Vec{0, 1}));
  EXPECT_THROW(Adapter::affine(2).forward(Vec{1, 2, 3}), DimensionMismatch);
}

TEST(Adapter, StartsAtExactIdentity) {
  Rng rng(1);
  const Adapter aff = Adapter::affine(4);
  const Adapter mlp = Adapter::mlp1(4, 7, 99);
  EXPECT_EQ(Adapter::identity(4).param_count(), 0u);
  EXPECT_EQ(aff.param_count(), 4u * 4u + 4u);
  EXPECT_EQ(mlp.param_count(), 7u * 4u + 7u + 4u * 7u);
  for (int t = 0; t < 50; ++t) {
    const Vec x = random_vec(rng, 4, 10.0);
    EXPECT_EQ(aff.forward(x), x);
    EXPECT_EQ(mlp.forward(x), x);
  }
}

TEST(Adapter, BackwardHandValues) {
  const Vec x{0.5, 2.0}, w{1.5, -0.25};
  const auto id = Adapter::identity(2).backward(x, w);
  EXPECT_TRUE(id.params.empty());
  EXPECT_EQ(id.input, w);
  Rng rng(2);
  const Adapter aff = randomized(Adapter::affine(2), rng, 0.5);
  const auto g = aff.backward(x, w);
  // Layout is A (row-major) then b; d/db <w, Ax + b> = w.
  EXPECT_EQ(g.params[4], w[0]);
  EXPECT_EQ(g.params[5], w[1]);
  EXPECT_DOUBLE_EQ(g.params[1], w[0] * x[1]);
  EXPECT_THROW(aff.backward(x, Vec{1.0}), DimensionMismatch);
}

TEST(Adapter, BackwardMatchesFiniteDifferences) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const std::size_t d = 1 + rng.below(5), h = 1 + rng.below(6);
    const Adapter base = t % 2 == 0 ? randomized(Adapter::affine(d), rng, 0.5)
                                    : randomized(Adapter::mlp1(d, h, rng.next_u64(), 0.5), rng, 0.5);
    const Vec x = random_vec(rng, d), w = random_vec(rng, d);
    const auto g = base.backward(x, w);

    Adapter probe = base;
    const std::vector<double> theta(base.params().begin(), base.params().end());
    const auto fd_params = oracles::finite_diff_grad(
        [&](std::span<const double> p) {
          probe.set_params(p);
          return upstream_dot(probe.forward(x), w);
        },
        theta);
    EXPECT_LT(oracles::relative_error(fd_params, g.params), 1e-4);
    const auto fd_input =
        oracles::finite_diff_grad([&](std::span<const double> v) { return upstream_dot(base.forward(v), w); }, x);
    EXPECT_LT(oracles::relative_error(fd_input, g.input), 1e-4);
  }
}

TEST(Adapter, SetParamsValidates) {
  Adapter a = Adapter::affine(2);
  EXPECT_THROW(a.set_params(std::vector<double>(5)), DimensionMismatch);
  a.set_params(std::vector<double>{2, 0, 0, 2, 1, 1});
  EXPECT_EQ(a.forward(Vec{1, 1}), (Vec{3, 3}));
}

TEST(FeatureMap, HandValues) {
  const std::vector<double> m{1, 2, 0, 1, -1, 3};  // 3 x 2
  const std::vector<double> c{0, 0, 0};
  const FeatureMap f = FeatureMap::fixed_affine(2, 3, m, c);
  EXPECT_EQ(f.out_dim(), 3u);
  const Points x = Points::from_rows({{1, 1}, {2, -1}});
  const Points y = compose_with_feature_map(Adapter::identity(2), f, x);
  EXPECT_EQ(y, Points::from_rows({{3, 1, 2}, {0, -1, -5}}));
  EXPECT_THROW(FeatureMap::fixed_affine(2, 3, std::vector<double>(5), c), DimensionMismatch);
}

TEST(FeatureMap, IdentityComposition) {
  Rng rng(4);
  const Adapter a = randomized(Adapter::mlp1(3, 4, 1, 0.5), rng, 0.3);
  const Points x = random_points(rng, 10, 3);
  EXPECT_EQ(compose_with_feature_map(a, FeatureMap::identity(3), x), a.forward(x));
}

TEST(FeatureMap, DeterministicPerSeed) {
  const auto a = FeatureMap::random_mlp(3, 5, 2, 7);
  const auto b = FeatureMap::random_mlp(3, 5, 2, 7);
  const auto c = FeatureMap::random_mlp(3, 5, 2, 8);
  const Vec x{0.1, -0.4, 2.0};
  EXPECT_EQ(a.forward(x), b.forward(x));
  EXPECT_NE(a.forward(x), c.forward(x));
}

TEST(FeatureMap, VjpMatchesFiniteDifferences) {
  Rng rng(5);
  for (auto make : {+[](std::uint64_t s) { return FeatureMap::random_affine(3, 4, s); },
                    +[](std::uint64_t s) { return FeatureMap::random_mlp(3, 6, 2, s); }}) {
    const FeatureMap f = make(rng.next_u64());
    const Vec x = random_vec(rng, 3), w = random_vec(rng, f.out_dim());
    const auto fd = oracles::finite_diff_grad([&](std::span<const double> v) { return dot(f.forward(v), w); }, x);
    EXPECT_LT(oracles::relative_error(fd, f.vjp(x, w)), 1e-6);
  }
}

TEST(ChainBackward, MatchesFiniteDifferences) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    const std::size_t d = 2 + rng.below(3);
    const FeatureMap f = t % 3 == 0   ? FeatureMap::identity(d)
                         : t % 3 == 1 ? FeatureMap::random_affine(d, 3, rng.next_u64())
                                      : FeatureMap::random_mlp(d, 5, 3, rng.next_u64());
    const Adapter base = t % 2 == 0 ? randomized(Adapter::affine(d), rng, 0.3)
                                    : randomized(Adapter::mlp1(d, 4, rng.next_u64(), 0.5), rng, 0.3);
    const Points x = random_points(rng, 10, d);
    const Points w = random_points(rng, 10, f.out_dim());
    const auto g = chain_backward(base, f, x, w);
    Adapter probe = base;
    const std::vector<double> theta(base.params().begin(), base.params().end());
    const auto fd = oracles::finite_diff_grad(
        [&](std::span<const double> p) {
          probe.set_params(p);
          const Points y = compose_with_feature_map(probe, f, x);
          return dot(y.data(), w.data());
        },
        theta);
    EXPECT_LT(oracles::relative_error(fd, g), 1e-4);
  }
  EXPECT_THROW(chain_backward(Adapter::affine(2), FeatureMap::identity(2), Points(3, 2), Points(2, 2)),
               DimensionMismatch);
  EXPECT_THROW(compose_with_feature_map(Adapter::affine(2), FeatureMap::identity(3), Points(3, 2)),
               DimensionMismatch);
}
