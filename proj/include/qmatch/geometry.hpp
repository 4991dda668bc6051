#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qmatch/types.hpp"

namespace qmatch {

// Cloud points closer than this to a probe are treated as coincident and
// dropped from the index average, which is then renormalized by the number
// of remaining points.
inline constexpr double kCoincidenceEps = 1e-12;

// Index vector in the closed unit ball (up to 1e-9 slack).
class QuantileIndex {
 public:
  explicit QuantileIndex(Vec u);
  const Vec& value() const { return u_; }
  std::size_t dim() const { return u_.size(); }
  double norm() const;

 private:
  Vec u_;
};

// Phi(u, t) = |t| + <u, t>.
double phi(std::span<const double> u, std::span<const double> t);

// Mean of Phi(u, Z_i - Q) over the cloud. Convex in Q.
double phi_loss(const PointCloud& cloud, std::span<const double> u, std::span<const double> q);

// Evaluates the quantile index U(z) = mean_i (z - Z_i)/|z - Z_i| of a fixed
// cloud at many probes. Holds a column-major copy of the cloud for the
// SIMD kernels.
class QuantileIndexField {
 public:
  explicit QuantileIndexField(const PointCloud& cloud) : QuantileIndexField(cloud.points()) {}
  // Any non-empty block of points, e.g. a minibatch.
  explicit QuantileIndexField(const Points& points);

  std::size_t size() const { return n_; }
  std::size_t dim() const { return d_; }
  const std::vector<double>& panel() const { return panel_; }

  Vec at(std::span<const double> z) const;

  // Raw form: writes the unnormalized unit-vector sum and (optionally) the
  // per-point inverse distances; returns the number of non-coincident points.
  std::size_t direction_sum(std::span<const double> z, double* sum, double* inv) const;

 private:
  std::size_t n_;
  std::size_t d_;
  std::vector<double> panel_;
};

QuantileIndex quantile_index(const PointCloud& cloud, std::span<const double> z);

struct SolverOptions {
  double tolerance = 1e-8;
  int max_iterations = 500;
  bool record_history = false;
};

struct SolverReport {
  Vec quantile;
  int iterations = 0;
  // |U(Q) - u| with U evaluated under the coincidence rule.
  double residual = 0.0;
  bool converged = false;
  // Q sits on a cloud point whose subgradient certificate proves optimality;
  // the residual is then generally nonzero because the minimizer is a kink.
  bool at_data_point = false;
  bool optimal = false;
  // Cloud covariance has rank < d, so the minimizer may not be unique.
  bool non_unique_risk = false;
  // phi_loss after each accepted iterate, starting with the initial point.
  std::vector<double> loss_history;
};

// Minimizes phi_loss(cloud, u, .) by Weiszfeld-type majorize-minimize steps
// Q <- (sum Z_i/d_i + n u) / sum 1/d_i, accelerated with safeguarded Newton
// steps and backed by halving gradient descent. Every accepted step is
// non-increasing in the loss.
SolverReport geometric_quantile(const PointCloud& cloud, const QuantileIndex& u,
                                const SolverOptions& options = {});

}  // namespace qmatch
