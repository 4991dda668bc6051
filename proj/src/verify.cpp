#include "qmatch/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "qmatch/adapters.hpp"
#include "qmatch/geometry.hpp"
#include "qmatch/memory_bank.hpp"
#include "qmatch/oracles.hpp"
#include "qmatch/quant_loss.hpp"
#include "qmatch/rng.hpp"

namespace qmatch::verify {

bool SuiteReport::all_passed() const {
  return std::all_of(properties.begin(), properties.end(), [](const auto& p) { return p.passed; });
}

namespace {

Points gaussian_points(Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  Points p(n, d);
  for (double& v : p.data()) v = scale * rng.normal();
  return p;
}

Vec random_ball_point(Rng& rng, std::size_t d, double radius) {
  Vec u(d);
  for (double& v : u) v = rng.normal();
  const double s = radius / norm(u);
  for (double& v : u) v *= s;
  return u;
}

// x -> A x + c with A = I + noise.
Points perturbed_affine(Rng& rng, const Points& x, double strength) {
  const std::size_t d = x.dim();
  std::vector<double> a(d * d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) a[i * d + j] = (i == j ? 1.0 : 0.0) + strength * rng.normal();
  Vec c(d);
  for (double& v : c) v = strength * rng.normal();
  Points out(x.size(), d);
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double s = c[r];
      for (std::size_t k = 0; k < d; ++k) s += a[r * d + k] * x(i, k);
      out(i, r) = s;
    }
  return out;
}

PropertyResult at_most(std::string name, double measured, double threshold, std::string detail = {}) {
  return {std::move(name), measured <= threshold, measured, threshold, std::move(detail)};
}

}  // namespace

SuiteReport inverse_map(std::size_t trials, std::uint64_t seed) {
  SuiteReport rep{"inverse-map", {}};
  Rng rng = Rng::stream(seed, "verify.inverse_map");
  double worst = 0.0;
  std::size_t ok = 0, monotone = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 10 + rng.below(191);
    const std::size_t d = 2 + rng.below(15);
    const PointCloud cloud(gaussian_points(rng, n, d, 0.5 + 2.0 * rng.uniform()));
    const QuantileIndex u(random_ball_point(rng, d, 0.9 * rng.uniform()));
    const SolverReport r = geometric_quantile(cloud, u, {.record_history = true});
    const Vec idx = oracles::quantile_index_direct(cloud.points(), r.quantile);
    double res = 0.0;
    for (std::size_t k = 0; k < d; ++k) res += (idx[k] - u.value()[k]) * (idx[k] - u.value()[k]);
    res = std::sqrt(res);
    worst = std::max(worst, res);
    if (res <= 1e-6) ++ok;
    const auto& h = r.loss_history;
    bool mono = true;
    for (std::size_t i = 1; i < h.size(); ++i) mono = mono && h[i] <= h[i - 1] + 1e-13 * std::max(1.0, std::abs(h[i - 1]));
    if (mono) ++monotone;
  }
  const std::string tally = std::to_string(ok) + "/" + std::to_string(trials);
  rep.properties.push_back({"fixed_point_residual", ok == trials, worst, 1e-6, tally + " below threshold"});
  rep.properties.push_back({"loss_non_increasing", monotone == trials, static_cast<double>(trials - monotone), 0.0,
                            std::to_string(monotone) + "/" + std::to_string(trials) + " monotone histories"});
  return rep;
}

SuiteReport variance(std::size_t n, std::size_t b, std::uint64_t seed) {
  if (n < 2 || b < 1 || b > n) throw InvalidArgument("verify variance: need n >= 2 and 1 <= b <= n");
  if (oracles::binomial(n, b) > oracles::BatchEnumerator::kMaxSubsets)
    throw InvalidArgument("verify variance: too many batches to enumerate");
  SuiteReport rep{"variance", {}};
  Rng rng = Rng::stream(seed, "verify.variance");
  const std::size_t d = 2;
  const PointCloud source(gaussian_points(rng, n, d));
  const ReferenceSet refs = select_references(source, std::nullopt, std::min<std::size_t>(n, 4), seed);
  const Points now = perturbed_affine(rng, source.points(), 0.3);
  const Points snap = perturbed_affine(rng, now, 0.05);

  // h[r][i] computed straight from the definition.
  const std::size_t m = refs.size();
  std::vector<std::vector<Vec>> hn(m, std::vector<Vec>(n, Vec(d, 0.0))), hs = hn;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      for (auto [pts, h] : {std::pair{&now, &hn}, std::pair{&snap, &hs}}) {
        Vec diff(d);
        for (std::size_t k = 0; k < d; ++k) diff[k] = refs.quantiles(r, k) - (*pts)(i, k);
        const double len = norm(diff);
        if (len > kCoincidenceEps)
          for (std::size_t k = 0; k < d; ++k) (*h)[r][i][k] = diff[k] / len;
      }
    }
  auto mean_over = [&](const std::vector<Vec>& hr, std::span<const std::size_t> idx) {
    Vec out(d, 0.0);
    for (std::size_t i : idx)
      for (std::size_t k = 0; k < d; ++k) out[k] += hr[i][k];
    for (double& v : out) v /= static_cast<double>(idx.size());
    return out;
  };
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::vector<Vec> exact(m);
  for (std::size_t r = 0; r < m; ++r) exact[r] = mean_over(hn[r], all);

  const MemoryBank bank = refresh_snapshot(MemoryBank{}, snap, refs);
  std::vector<Vec> est_sum(m, Vec(d, 0.0));
  double crude_ss = 0.0, cv_ss = 0.0;
  std::uint64_t batches = 0;
  for (oracles::BatchEnumerator it(n, b); !it.done(); it.next(), ++batches) {
    const auto& batch = it.current();
    const Points est = control_variate_estimate(bank, batch, now.gather(batch), refs);
    for (std::size_t r = 0; r < m; ++r) {
      const Vec crude = mean_over(hn[r], batch);
      for (std::size_t k = 0; k < d; ++k) {
        est_sum[r][k] += est(r, k);
        crude_ss += (crude[k] - exact[r][k]) * (crude[k] - exact[r][k]);
        cv_ss += (est(r, k) - exact[r][k]) * (est(r, k) - exact[r][k]);
      }
    }
  }
  const double norm_count = static_cast<double>(batches) * static_cast<double>(m);
  const double crude_exh = crude_ss / norm_count;
  const double cv_exh = cv_ss / norm_count;

  double bias = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t k = 0; k < d; ++k)
      bias = std::max(bias, std::abs(est_sum[r][k] / static_cast<double>(batches) - exact[r][k]));
  rep.properties.push_back(at_most("estimator_unbiased", bias, 1e-12,
                                   std::to_string(batches) + " batches, max |mean estimate - exact|"));

  // Population trace of the covariance of h_r, averaged over references.
  double trace = 0.0;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) trace += (hn[r][i][k] - exact[r][k]) * (hn[r][i][k] - exact[r][k]);
  trace /= static_cast<double>(n) * static_cast<double>(m);
  const double lemma = (1.0 / static_cast<double>(b)) * static_cast<double>(n - b) / static_cast<double>(n - 1) * trace;
  rep.properties.push_back(at_most("crude_variance_formula", std::abs(crude_exh - lemma), 1e-10,
                                   "exhaustive " + std::to_string(crude_exh) + " vs formula " + std::to_string(lemma)));

  const auto lib_exh = estimator_variance(now, snap, refs, b, EstimatorMode::exhaustive);
  const auto lib_cf = estimator_variance(now, snap, refs, b, EstimatorMode::closed_form);
  rep.properties.push_back(at_most("library_exhaustive_crude", std::abs(lib_exh.crude_variance - crude_exh), 1e-10));
  rep.properties.push_back(at_most("library_exhaustive_control", std::abs(lib_exh.control_variance - cv_exh), 1e-10));
  rep.properties.push_back(at_most("closed_form_crude", std::abs(lib_cf.crude_variance - crude_exh), 1e-10));
  rep.properties.push_back(at_most("closed_form_control", std::abs(lib_cf.control_variance - cv_exh), 1e-10));
  return rep;
}

SuiteReport gradients(std::size_t instances, std::uint64_t seed) {
  SuiteReport rep{"gradients", {}};
  Rng rng = Rng::stream(seed, "verify.gradients");
  const AdapterKind kinds[] = {AdapterKind::identity, AdapterKind::affine, AdapterKind::mlp1};
  const FeatureKind fkinds[] = {FeatureKind::identity, FeatureKind::fixed_affine, FeatureKind::fixed_mlp};
  double worst[3] = {0.0, 0.0, 0.0};
  std::size_t seen[3] = {0, 0, 0};

  for (std::size_t t = 0; t < instances; ++t) {
    const AdapterKind kind = kinds[t % 3];
    const FeatureKind fkind = fkinds[(t / 3) % 3];
    const std::size_t d = 2 + rng.below(3);
    const std::size_t n = 8 + rng.below(16);
    const std::size_t k = fkind == FeatureKind::identity ? d : 2 + rng.below(3);
    const std::uint64_t s = rng.next_u64();
    const FeatureMap fmap = fkind == FeatureKind::identity   ? FeatureMap::identity(d)
                            : fkind == FeatureKind::fixed_affine ? FeatureMap::random_affine(d, k, s)
                                                                 : FeatureMap::random_mlp(d, 6, k, s);
    const Points clean = gaussian_points(rng, n, d);
    const Points target = perturbed_affine(rng, clean, 0.3);
    const PointCloud source(fmap.forward(clean));
    const ReferenceSet refs = select_references(source, std::nullopt, std::min<std::size_t>(n, 6), s);
    BatchStatRegularizer reg;
    if (t % 4 == 3) {
      reg.weight = 0.1;
      reg.source_mean = coordinate_mean(source.points());
      reg.source_std = coordinate_std(source.points());
    }

    Adapter adapter = kind == AdapterKind::identity ? Adapter::identity(d)
                      : kind == AdapterKind::affine ? Adapter::affine(d)
                                                    : Adapter::mlp1(d, 5, s, 0.5);
    // Move away from the identity start so every parameter has a nonzero
    // gradient path.
    for (double& p : adapter.mutable_params()) p += 0.2 * rng.normal();

    std::vector<double> analytic, numeric;
    if (kind == AdapterKind::identity) {
      // No parameters; differentiate with respect to the inputs instead.
      const Points feats = fmap.forward(target);
      const Points gfeat = quantile_loss_grad(feats, refs, reg);
      for (std::size_t j = 0; j < n; ++j) {
        const Vec g = fmap.vjp(target.row(j), gfeat.row(j));
        analytic.insert(analytic.end(), g.begin(), g.end());
      }
      const std::vector<double> flat(target.data().begin(), target.data().end());
      numeric = oracles::finite_diff_grad(
          [&](std::span<const double> x) {
            Points moved(n, d);
            std::copy(x.begin(), x.end(), moved.data().begin());
            return quantile_loss(fmap.forward(moved), refs, reg).total;
          },
          flat);
    } else {
      const Points feats = compose_with_feature_map(adapter, fmap, target);
      analytic = chain_backward(adapter, fmap, target, quantile_loss_grad(feats, refs, reg));
      const std::vector<double> theta(adapter.params().begin(), adapter.params().end());
      Adapter probe = adapter;
      numeric = oracles::finite_diff_grad(
          [&](std::span<const double> p) {
            probe.set_params(p);
            return quantile_loss(compose_with_feature_map(probe, fmap, target), refs, reg).total;
          },
          theta);
    }
    const std::size_t slot = t % 3;
    worst[slot] = std::max(worst[slot], oracles::relative_error(numeric, analytic));
    ++seen[slot];
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (seen[i] == 0) continue;
    rep.properties.push_back(at_most("relative_error_" + std::string(to_string(kinds[i])), worst[i], 1e-4,
                                     std::to_string(seen[i]) + " instances"));
  }
  return rep;
}

SuiteReport wasserstein(std::size_t trials, std::uint64_t seed) {
  SuiteReport rep{"wasserstein", {}};
  Rng rng = Rng::stream(seed, "verify.wasserstein");
  double brute = 0.0, perm = 0.0, sym = 0.0, shift = 0.0;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t n = 2 + rng.below(6);
    const std::size_t d = 1 + rng.below(3);
    const Points a = gaussian_points(rng, n, d);
    const Points b = gaussian_points(rng, n, d, 1.5);
    const double exact = oracles::wasserstein2(a, b).cost;
    brute = std::max(brute, std::abs(exact - oracles::wasserstein2_bruteforce(a, b).cost));
    sym = std::max(sym, std::abs(exact - oracles::wasserstein2(b, a).cost));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    rng.shuffle(order);
    perm = std::max(perm, oracles::wasserstein2(a, a.gather(order)).cost);

    Vec c(d);
    for (double& v : c) v = 3.0 * rng.normal();
    Points moved = a;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < d; ++k) moved(i, k) += c[k];
    const double expect = dot(c, c);
    shift = std::max(shift, std::abs(oracles::wasserstein2(a, moved).cost - expect) / (1.0 + expect));
  }
  rep.properties.push_back(at_most("matches_bruteforce", brute, 1e-12));
  rep.properties.push_back(at_most("symmetric", sym, 1e-12));
  rep.properties.push_back(at_most("zero_on_permutation", perm, 1e-12));
  rep.properties.push_back(at_most("translation_cost", shift, 1e-12));
  return rep;
}

void print(std::ostream& out, const SuiteReport& report) {
  char buf[64];
  for (const auto& p : report.properties) {
    std::snprintf(buf, sizeof buf, "measured=%.3e threshold=%.1e", p.measured, p.threshold);
    out << (p.passed ? "PASS " : "FAIL ") << report.suite << '/' << p.name << ' ' << buf;
    if (!p.detail.empty()) out << " (" << p.detail << ')';
    out << '\n';
  }
}

}  // namespace qmatch::verify
