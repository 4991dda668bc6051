#pragma once

// Snapshot cache for the composite-separable quantile loss. The bank keeps
// the snapshot averages S_r = (1/n) sum_i h_r(x_i; theta_snap), and a
// minibatch B estimates the current average A_r by
//
//   (1/b) sum_{i in B} h_r(x_i; theta_t) + S_r - (1/b) sum_{i in B} h_r(x_i; theta_snap)
//
// which is unbiased for every batch size and has vanishing variance as
// theta_t approaches theta_snap.

#include <cstdint>
#include <span>
#include <vector>

#include "qmatch/quant_loss.hpp"
#include "qmatch/types.hpp"

namespace qmatch {

struct MemoryBank {
  Points features;           // n x k, features at the last time each sample was touched
  Points snapshot_features;  // n x k, features at theta_snap
  Points snapshot_avgs;      // |R| x k
  std::size_t epoch_of_snapshot = 0;
  bool initialized = false;

  std::size_t size() const { return features.size(); }

  // Overwrites cached features for the given sample indices.
  void touch(std::span<const std::size_t> batch, const Points& batch_features);
};

// Recomputes snapshot features and averages at the current parameters and
// advances epoch_of_snapshot. An uninitialized bank is sized from `adapted`.
MemoryBank refresh_snapshot(MemoryBank bank, const Points& adapted, const ReferenceSet& refs);

// current_h / snapshot_h are per-reference batch averages (|R| x k) at
// theta_t and theta_snap respectively, e.g. from batch_direction_means.
Points control_variate_estimate(const MemoryBank& bank, std::span<const std::size_t> batch,
                                const Points& current_h, const Points& snapshot_h);

// Convenience: forms both batch averages from the given current features
// and the bank's cached snapshot features, then applies the estimator.
Points control_variate_estimate(const MemoryBank& bank, std::span<const std::size_t> batch,
                                const Points& current_batch_features, const ReferenceSet& refs);

enum class EstimatorMode { exhaustive, monte_carlo, closed_form };

// Variances are expected squared norms E|est - A|^2, averaged over
// references; beta_star = sum_r sigma_as / sum_r sigma_s^2.
struct EstimatorDiagnostics {
  double crude_variance = 0.0;
  double control_variance = 0.0;
  double beta_star = 0.0;
  // Population quantities behind the closed form, averaged over references.
  double sigma_a2 = 0.0;
  double sigma_s2 = 0.0;
  double sigma_as = 0.0;
};

// Finite-population factor (1/b)(n-b)/(n-1) for sampling b of n without
// replacement.
double sampling_factor(std::size_t n, std::size_t b);

EstimatorDiagnostics estimator_variance(const Points& adapted_t, const Points& adapted_snap,
                                        const ReferenceSet& refs, std::size_t b,
                                        EstimatorMode mode, std::size_t draws = 10000,
                                        std::uint64_t seed = 0);

}  // namespace qmatch
