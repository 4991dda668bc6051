#include "qmatch/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

#include "qmatch/kernels.hpp"

namespace qmatch {

QuantileIndex::QuantileIndex(Vec u) : u_(std::move(u)) {
  if (u_.empty()) throw InvalidArgument("QuantileIndex: empty vector");
  for (double v : u_) {
    if (!std::isfinite(v)) throw InvalidArgument("QuantileIndex: non-finite coordinate");
  }
  if (norm() > 1.0 + 1e-9) throw InvalidArgument("QuantileIndex: norm exceeds 1");
}

double QuantileIndex::norm() const { return qmatch::norm(u_); }

double phi(std::span<const double> u, std::span<const double> t) {
  require_same_dim(u.size(), t.size(), "phi");
  return norm(t) + dot(u, t);
}

double phi_loss(const PointCloud& cloud, std::span<const double> u, std::span<const double> q) {
  require_same_dim(u.size(), cloud.dim(), "phi_loss");
  require_same_dim(q.size(), cloud.dim(), "phi_loss");
  Vec t(cloud.dim());
  double total = 0.0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto z = cloud.row(i);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = z[k] - q[k];
    total += phi(u, t);
  }
  return total / static_cast<double>(cloud.size());
}

QuantileIndexField::QuantileIndexField(const Points& points)
    : n_(points.size()), d_(points.dim()), panel_(points.transposed()) {
  if (n_ == 0) throw InvalidArgument("QuantileIndexField: empty point set");
}

std::size_t QuantileIndexField::direction_sum(std::span<const double> z, double* sum,
                                              double* inv) const {
  require_same_dim(z.size(), d_, "quantile index");
  return kernels::active().direction_sum(panel_.data(), n_, d_, z.data(), kCoincidenceEps, inv,
                                         sum);
}

Vec QuantileIndexField::at(std::span<const double> z) const {
  Vec sum(d_);
  const std::size_t count = direction_sum(z, sum.data(), nullptr);
  if (count == 0) throw DegenerateInput("quantile index undefined: probe coincides with every point");
  for (double& v : sum) v /= static_cast<double>(count);
  return sum;
}

QuantileIndex quantile_index(const PointCloud& cloud, std::span<const double> z) {
  Vec u = QuantileIndexField(cloud).at(z);
  // Rounding can push a unit-vector average a hair past the unit sphere.
  const double len = norm(u);
  if (len > 1.0) {
    for (double& v : u) v /= len;
  }
  return QuantileIndex(std::move(u));
}

namespace {

class SolverState {
 public:
  SolverState(const PointCloud& cloud, const Vec& u)
      : cloud_(cloud), field_(cloud), u_(u), n_(cloud.size()), d_(cloud.dim()),
        mean_(cloud.mean()), sum_(d_), inv_(n_) {}

  double loss(std::span<const double> q) const {
    const double dist =
        kernels::active().distance_sum(field_.panel().data(), n_, d_, q.data());
    double lin = 0.0;
    for (std::size_t k = 0; k < d_; ++k) lin += u_[k] * (mean_[k] - q[k]);
    return dist / static_cast<double>(n_) + lin;
  }

  // Fills sum_/inv_ at q; returns the non-coincident count.
  std::size_t directions(std::span<const double> q) {
    return field_.direction_sum(q, sum_.data(), inv_.data());
  }

  // Index of the nearest cloud point to q, from inv_ (largest inverse
  // distance; coincident points have inv 0 and are reported separately).
  std::size_t nearest_from_inv() const {
    return static_cast<std::size_t>(std::max_element(inv_.begin(), inv_.end()) - inv_.begin());
  }

  // Subgradient certificate at a cloud point p: p minimizes the loss iff
  // |sum_{i: Z_i != p} (p - Z_i)/|p - Z_i| - n u| <= #{i: Z_i == p}.
  bool vertex_optimal(std::span<const double> p) {
    const std::size_t count = directions(p);
    const double coincident = static_cast<double>(n_ - count);
    if (coincident == 0.0) return false;
    double r2 = 0.0;
    for (std::size_t k = 0; k < d_; ++k) {
      const double r = sum_[k] - static_cast<double>(n_) * u_[k];
      r2 += r * r;
    }
    return std::sqrt(r2) <= coincident;
  }

  double residual_at(std::span<const double> q) {
    const std::size_t count = directions(q);
    if (count == 0) return std::numeric_limits<double>::infinity();
    double r2 = 0.0;
    for (std::size_t k = 0; k < d_; ++k) {
      const double r = sum_[k] / static_cast<double>(count) - u_[k];
      r2 += r * r;
    }
    return std::sqrt(r2);
  }

  const PointCloud& cloud_;
  QuantileIndexField field_;
  const Vec& u_;
  std::size_t n_;
  std::size_t d_;
  Vec mean_;
  Vec sum_;
  Vec inv_;
};

bool covariance_rank_deficient(const PointCloud& cloud) {
  const std::size_t d = cloud.dim();
  if (d < 2) return false;
  const Vec m = cloud.mean();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d),
                                              static_cast<Eigen::Index>(d));
  Eigen::VectorXd x(static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto r = cloud.row(i);
    for (std::size_t k = 0; k < d; ++k) x[static_cast<Eigen::Index>(k)] = r[k] - m[k];
    cov.noalias() += x * x.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  const double top = ev.maxCoeff();
  return top <= 0.0 || ev.minCoeff() <= 1e-12 * top;
}

}  // namespace

SolverReport geometric_quantile(const PointCloud& cloud, const QuantileIndex& index,
                                const SolverOptions& options) {
  require_same_dim(index.dim(), cloud.dim(), "geometric_quantile");
  if (index.norm() >= 1.0) throw InvalidArgument("geometric_quantile: index must satisfy |u| < 1");

  const Vec& u = index.value();
  SolverState st(cloud, u);
  const std::size_t n = cloud.size();
  const std::size_t d = cloud.dim();
  const double nd = static_cast<double>(n);

  SolverReport report;
  report.non_unique_risk = covariance_rank_deficient(cloud);

  Vec q = st.mean_;
  double loss = st.loss(q);
  if (options.record_history) report.loss_history.push_back(loss);

  Vec cand(d);
  auto try_accept = [&](const Vec& c) {
    for (double v : c) {
      if (!std::isfinite(v)) return false;
    }
    const double l = st.loss(c);
    if (!(l <= loss + 1e-13 * std::max(1.0, std::abs(loss)))) return false;
    q = c;
    loss = l;
    if (options.record_history) report.loss_history.push_back(loss);
    return true;
  };

  Eigen::MatrixXd hess(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::VectorXd grad(static_cast<Eigen::Index>(d));

  int it = 0;
  for (; it < options.max_iterations; ++it) {
    const std::size_t count = st.directions(q);

    if (count < n) {
      // Sitting on a cloud point: either it is the minimizer, or leave it
      // along the negated minimum-norm subgradient.
      const Vec sum = st.sum_;
      if (st.vertex_optimal(q)) {
        report.at_data_point = true;
        report.optimal = true;
        break;
      }
      Vec r(d);
      double rn = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        r[k] = sum[k] - nd * u[k];
        rn += r[k] * r[k];
      }
      rn = std::sqrt(rn);
      double inv_total = 0.0;
      for (double v : st.inv_) inv_total += v;
      const double coincident = static_cast<double>(n - count);
      double step = inv_total > 0.0 ? (rn - coincident) / inv_total : 1.0;
      bool moved = false;
      for (int h = 0; h < 60 && !moved; ++h, step *= 0.5) {
        for (std::size_t k = 0; k < d; ++k) cand[k] = q[k] - step * r[k] / rn;
        moved = try_accept(cand);
      }
      if (!moved) break;
      continue;
    }

    double inv_total = 0.0;
    for (double v : st.inv_) inv_total += v;
    double res2 = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double g = st.sum_[k] / nd - u[k];
      grad[static_cast<Eigen::Index>(k)] = g;
      res2 += g * g;
    }
    if (std::sqrt(res2) <= options.tolerance) break;

    // A nearby cloud point may be the (kinked) minimizer.
    const std::size_t near = st.nearest_from_inv();
    const Vec inv_saved = st.inv_;
    {
      const auto p = cloud.row(near);
      if (st.vertex_optimal(p)) {
        Vec pv(p.begin(), p.end());
        if (try_accept(pv)) {
          report.at_data_point = true;
          report.optimal = true;
          ++it;
          break;
        }
      }
    }

    bool accepted = false;

    // Newton: the Hessian of the loss off the data is
    // (1/n) sum_i (I - v_i v_i^T) / d_i with v_i the unit direction.
    if (d >= 2) {
      hess.setZero();
      Eigen::VectorXd v(static_cast<Eigen::Index>(d));
      const auto& panel = st.field_.panel();
      for (std::size_t i = 0; i < n; ++i) {
        const double iv = inv_saved[i];
        for (std::size_t k = 0; k < d; ++k)
          v[static_cast<Eigen::Index>(k)] = (q[k] - panel[k * n + i]) * iv;
        hess.noalias() -= iv * (v * v.transpose());
        hess.diagonal().array() += iv;
      }
      hess /= nd;
      Eigen::LDLT<Eigen::MatrixXd> ldlt(hess);
      if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const Eigen::VectorXd step = ldlt.solve(grad);
        for (std::size_t k = 0; k < d; ++k) cand[k] = q[k] - step[static_cast<Eigen::Index>(k)];
        accepted = try_accept(cand);
      }
    }

    if (!accepted) {
      // Weiszfeld: sum_i (Q - Z_i)/d_i = n u solved with d_i frozen.
      const auto& panel = st.field_.panel();
      for (std::size_t k = 0; k < d; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += panel[k * n + i] * inv_saved[i];
        cand[k] = (acc + nd * u[k]) / inv_total;
      }
      accepted = try_accept(cand);
    }

    if (!accepted) {
      double step = nd / inv_total;
      for (int h = 0; h < 60 && !accepted; ++h, step *= 0.5) {
        for (std::size_t k = 0; k < d; ++k) cand[k] = q[k] - step * grad[static_cast<Eigen::Index>(k)];
        accepted = try_accept(cand);
      }
    }
    if (!accepted) break;  // stalled at rounding level
  }

  report.iterations = it;
  report.quantile = q;
  report.residual = st.residual_at(q);
  report.converged = report.residual <= options.tolerance;
  if (!report.at_data_point && st.directions(q) < n) {
    report.at_data_point = true;
    report.optimal = st.vertex_optimal(q);
  } else if (report.converged) {
    report.optimal = true;
  }
  return report;
}

}  // namespace qmatch
