#include "qmatch/memory_bank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qmatch/geometry.hpp"
#include "qmatch/oracles.hpp"
#include "qmatch/rng.hpp"

namespace qmatch {

void MemoryBank::touch(std::span<const std::size_t> batch, const Points& batch_features) {
  if (batch.size() != batch_features.size()) throw DimensionMismatch("MemoryBank::touch: batch size");
  require_same_dim(batch_features.dim(), features.dim(), "MemoryBank::touch");
  for (std::size_t j = 0; j < batch.size(); ++j) {
    if (batch[j] >= features.size()) throw InvalidArgument("MemoryBank::touch: index out of range");
    const auto src = batch_features.row(j);
    std::copy(src.begin(), src.end(), features.row(batch[j]).begin());
  }
}

MemoryBank refresh_snapshot(MemoryBank bank, const Points& adapted, const ReferenceSet& refs) {
  if (bank.initialized && adapted.size() != bank.size())
    throw DimensionMismatch("refresh_snapshot: adapted size does not match bank");
  bank.features = adapted;
  bank.snapshot_features = adapted;
  bank.snapshot_avgs = batch_direction_means(adapted, refs);
  if (bank.initialized) ++bank.epoch_of_snapshot;
  bank.initialized = true;
  return bank;
}

namespace {

void check_estimate_inputs(const MemoryBank& bank, std::span<const std::size_t> batch) {
  if (!bank.initialized) throw InvalidArgument("control_variate_estimate: bank not initialized");
  if (batch.empty()) throw InvalidArgument("control_variate_estimate: empty batch");
  for (std::size_t i : batch) {
    if (i >= bank.size()) throw InvalidArgument("control_variate_estimate: batch index out of range");
  }
}

}  // namespace

Points control_variate_estimate(const MemoryBank& bank, std::span<const std::size_t> batch,
                                const Points& current_h, const Points& snapshot_h) {
  check_estimate_inputs(bank, batch);
  const Points& s = bank.snapshot_avgs;
  if (current_h.size() != s.size() || snapshot_h.size() != s.size())
    throw DimensionMismatch("control_variate_estimate: one average per reference");
  require_same_dim(current_h.dim(), s.dim(), "control_variate_estimate");
  require_same_dim(snapshot_h.dim(), s.dim(), "control_variate_estimate");
  Points out(s.size(), s.dim());
  for (std::size_t j = 0; j < out.data().size(); ++j)
    out.data()[j] = current_h.data()[j] + (s.data()[j] - snapshot_h.data()[j]);
  return out;
}

Points control_variate_estimate(const MemoryBank& bank, std::span<const std::size_t> batch,
                                const Points& current_batch_features, const ReferenceSet& refs) {
  check_estimate_inputs(bank, batch);
  const Points cur = batch_direction_means(current_batch_features, refs);
  const Points snap = batch_direction_means(bank.snapshot_features.gather(batch), refs);
  return control_variate_estimate(bank, batch, cur, snap);
}

double sampling_factor(std::size_t n, std::size_t b) {
  if (b == 0 || b > n) throw InvalidArgument("sampling_factor: need 1 <= b <= n");
  if (n == 1) return 0.0;
  return (1.0 / static_cast<double>(b)) * static_cast<double>(n - b) / static_cast<double>(n - 1);
}

namespace {

// h_r(x_i) for every reference and sample: [r][i*k + c].
std::vector<std::vector<double>> unit_directions(const Points& x, const ReferenceSet& refs) {
  const std::size_t n = x.size();
  const std::size_t k = x.dim();
  std::vector<std::vector<double>> out(refs.size(), std::vector<double>(n * k, 0.0));
  for (std::size_t r = 0; r < refs.size(); ++r) {
    const auto z = refs.quantiles.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      double sq = 0.0;
      for (std::size_t c = 0; c < k; ++c) sq += (z[c] - x(i, c)) * (z[c] - x(i, c));
      const double len = std::sqrt(sq);
      if (len < kCoincidenceEps) continue;
      for (std::size_t c = 0; c < k; ++c) out[r][i * k + c] = (z[c] - x(i, c)) / len;
    }
  }
  return out;
}

struct BatchMoments {
  double crude = 0.0;
  double control = 0.0;
};

// Squared errors of both estimators for one batch, summed over references.
BatchMoments batch_errors(const std::vector<std::vector<double>>& a,
                          const std::vector<std::vector<double>>& s, const std::vector<Vec>& a_mean,
                          const std::vector<Vec>& s_mean, std::span<const std::size_t> batch,
                          std::size_t k) {
  BatchMoments m;
  const double b = static_cast<double>(batch.size());
  Vec ca(k), cs(k);
  for (std::size_t r = 0; r < a.size(); ++r) {
    std::fill(ca.begin(), ca.end(), 0.0);
    std::fill(cs.begin(), cs.end(), 0.0);
    for (std::size_t i : batch)
      for (std::size_t c = 0; c < k; ++c) {
        ca[c] += a[r][i * k + c];
        cs[c] += s[r][i * k + c];
      }
    for (std::size_t c = 0; c < k; ++c) {
      const double crude = ca[c] / b - a_mean[r][c];
      const double control = ca[c] / b + (s_mean[r][c] - cs[c] / b) - a_mean[r][c];
      m.crude += crude * crude;
      m.control += control * control;
    }
  }
  return m;
}

}  // namespace

EstimatorDiagnostics estimator_variance(const Points& adapted_t, const Points& adapted_snap,
                                        const ReferenceSet& refs, std::size_t b,
                                        EstimatorMode mode, std::size_t draws, std::uint64_t seed) {
  const std::size_t n = adapted_t.size();
  if (adapted_snap.size() != n) throw DimensionMismatch("estimator_variance: snapshot size");
  require_same_dim(adapted_t.dim(), refs.dim(), "estimator_variance");
  require_same_dim(adapted_snap.dim(), refs.dim(), "estimator_variance");
  if (b == 0 || b > n) throw InvalidArgument("estimator_variance: need 1 <= b <= n");
  if (refs.size() == 0) throw InvalidArgument("estimator_variance: empty reference set");

  const std::size_t k = adapted_t.dim();
  const auto a = unit_directions(adapted_t, refs);
  const auto s = unit_directions(adapted_snap, refs);
  const double nd = static_cast<double>(n);
  const double nr = static_cast<double>(refs.size());

  std::vector<Vec> a_mean(refs.size(), Vec(k, 0.0)), s_mean(refs.size(), Vec(k, 0.0));
  EstimatorDiagnostics diag;
  for (std::size_t r = 0; r < refs.size(); ++r) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        a_mean[r][c] += a[r][i * k + c] / nd;
        s_mean[r][c] += s[r][i * k + c] / nd;
      }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) {
        const double da = a[r][i * k + c] - a_mean[r][c];
        const double ds = s[r][i * k + c] - s_mean[r][c];
        diag.sigma_a2 += da * da / nd;
        diag.sigma_s2 += ds * ds / nd;
        diag.sigma_as += da * ds / nd;
      }
  }
  diag.beta_star = diag.sigma_s2 > 0.0 ? diag.sigma_as / diag.sigma_s2 : 1.0;
  diag.sigma_a2 /= nr;
  diag.sigma_s2 /= nr;
  diag.sigma_as /= nr;

  switch (mode) {
    case EstimatorMode::closed_form: {
      const double f = sampling_factor(n, b);
      diag.crude_variance = f * diag.sigma_a2;
      diag.control_variance = f * (diag.sigma_a2 + diag.sigma_s2 - 2.0 * diag.sigma_as);
      diag.control_variance = std::max(0.0, diag.control_variance);
      break;
    }
    case EstimatorMode::exhaustive: {
      double crude = 0.0, control = 0.0;
      std::uint64_t count = 0;
      for (oracles::BatchEnumerator e(n, b); !e.done(); e.next()) {
        const auto m = batch_errors(a, s, a_mean, s_mean, e.current(), k);
        crude += m.crude;
        control += m.control;
        ++count;
      }
      diag.crude_variance = crude / static_cast<double>(count) / nr;
      diag.control_variance = control / static_cast<double>(count) / nr;
      break;
    }
    case EstimatorMode::monte_carlo: {
      if (draws == 0) throw InvalidArgument("estimator_variance: draws must be positive");
      Rng rng = Rng::stream(seed, "estimator_variance");
      std::vector<std::size_t> perm(n);
      double crude = 0.0, control = 0.0;
      for (std::size_t t = 0; t < draws; ++t) {
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        // Partial Fisher-Yates: first b entries are a uniform b-subset.
        for (std::size_t i = 0; i < b; ++i) {
          const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
          std::swap(perm[i], perm[j]);
        }
        const auto m = batch_errors(a, s, a_mean, s_mean, std::span(perm).first(b), k);
        crude += m.crude;
        control += m.control;
      }
      diag.crude_variance = crude / static_cast<double>(draws) / nr;
      diag.control_variance = control / static_cast<double>(draws) / nr;
      break;
    }
  }
  return diag;
}

}  // namespace qmatch
