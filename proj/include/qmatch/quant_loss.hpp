#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "qmatch/geometry.hpp"
#include "qmatch/types.hpp"

namespace qmatch {

// Reference quantiles Z_r drawn from the source features, with their source
// quantile indices u_r precomputed once.
struct ReferenceSet {
  std::vector<std::size_t> source_indices;
  Points quantiles;  // |R| x d
  Points targets;    // |R| x d, row r is u_r
  std::optional<std::vector<int>> labels;

  std::size_t size() const { return quantiles.size(); }
  std::size_t dim() const { return quantiles.dim(); }
};

struct LossBreakdown {
  double total = 0.0;
  std::vector<double> per_reference;
  double regularizer = 0.0;
};

// Penalty on drift of first and second batch moments. Disabled at weight 0.
struct BatchStatRegularizer {
  double weight = 0.0;
  Vec source_mean;
  Vec source_std;

  bool enabled() const { return weight != 0.0; }
};

// Class-balanced uniform draw without replacement (or plain uniform when no
// labels are given). Deterministic for a fixed seed.
ReferenceSet select_references(const PointCloud& source,
                               std::optional<std::span<const int>> labels, std::size_t count,
                               std::uint64_t seed);

// mean_r |U_adapted(Z_r) - u_r|^2 (+ weight * batch_stat_penalty).
LossBreakdown quantile_loss(const Points& adapted, const ReferenceSet& refs,
                            const BatchStatRegularizer& reg = {});

// d total / d adapted_i for every adapted point (n x d).
Points quantile_loss_grad(const Points& adapted, const ReferenceSet& refs,
                          const BatchStatRegularizer& reg = {});

// Unit vector from x toward z: (z - x)/|z - x|.
Vec h_r(std::span<const double> x, std::span<const double> z);
// |avg - u|^2.
double g_r(std::span<const double> avg, std::span<const double> u);

// The same loss written as mean_r g_r(mean_i h_r(x_i, Z_r)). Evaluated pair
// by pair without the SIMD kernels.
double composite_quantile_loss(const Points& adapted, const ReferenceSet& refs);

// Per-reference averages (1/b) sum_{i in batch} h_r(x_i, Z_r) (|R| x d).
// Coincident pairs contribute a zero vector and are not renormalized.
Points batch_direction_means(const Points& batch, const ReferenceSet& refs);

// Gradient of (1/|R|) sum_r g_r(est_r) with respect to the batch features,
// where est_r is treated as (1/b) sum_{i in batch} h_r(x_i) plus a constant.
// With est equal to the exact full average this is quantile_loss_grad.
Points composite_feature_grad(const Points& batch, const ReferenceSet& refs,
                              const Points& estimates);

double batch_stat_penalty(const Points& adapted, std::span<const double> source_mean,
                          std::span<const double> source_std);
Points batch_stat_penalty_grad(const Points& adapted, std::span<const double> source_mean,
                               std::span<const double> source_std);

// Sample (n-1) per-coordinate standard deviation.
Vec coordinate_std(const Points& points);
Vec coordinate_mean(const Points& points);

}  // namespace qmatch
