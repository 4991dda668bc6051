#include "qmatch/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qmatch::oracles {

Pairing Pairing::identity(std::size_t n) {
  Pairing p;
  p.target_to_source.resize(n);
  std::iota(p.target_to_source.begin(), p.target_to_source.end(), std::size_t{0});
  return p;
}

double TransportPlan::distance() const { return std::sqrt(cost); }

namespace {

void check_pair(const Points& a, const Points& b, const char* what) {
  if (a.size() != b.size())
    throw InvalidArgument(std::string(what) + ": clouds must have equal size");
  if (a.empty()) throw InvalidArgument(std::string(what) + ": empty clouds");
  require_same_dim(a.dim(), b.dim(), what);
}

double plan_cost(const Points& a, const Points& b, const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += squared_distance(a.row(i), b.row(assignment[i]));
  return total / static_cast<double>(a.size());
}

}  // namespace

TransportPlan wasserstein2(const Points& a, const Points& b) {
  check_pair(a, b, "wasserstein2");
  const std::size_t n = a.size();
  if (n > kMaxExactTransport) throw InvalidArgument("wasserstein2: cloud too large for exact assignment");

  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = squared_distance(a.row(i), b.row(j));

  // Shortest augmenting path with dual potentials; rows and columns are
  // 1-based, column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> pu(n + 1, 0.0), pv(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - pu[i0] - pv[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          pu[match[j]] += delta;
          pv[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  TransportPlan plan;
  plan.assignment.resize(n);
  for (std::size_t j = 1; j <= n; ++j) plan.assignment[match[j] - 1] = j - 1;
  plan.cost = plan_cost(a, b, plan.assignment);
  return plan;
}

TransportPlan wasserstein2_bruteforce(const Points& a, const Points& b) {
  check_pair(a, b, "wasserstein2_bruteforce");
  if (a.size() > 9) throw InvalidArgument("wasserstein2_bruteforce: n must be <= 9");
  std::vector<std::size_t> perm(a.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  TransportPlan best;
  best.cost = std::numeric_limits<double>::infinity();
  do {
    const double c = plan_cost(a, b, perm);
    if (c < best.cost) {
      best.cost = c;
      best.assignment = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

double paired_mse(const Points& a, const Points& b, const Pairing& pairing) {
  require_same_dim(a.dim(), b.dim(), "paired_mse");
  if (pairing.size() != b.size()) throw InvalidArgument("paired_mse: pairing must cover every target point");
  if (b.empty()) throw InvalidArgument("paired_mse: empty clouds");
  std::vector<char> seen(a.size(), 0);
  double total = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const std::size_t i = pairing.target_to_source[j];
    if (i >= a.size() || seen[i]) throw InvalidArgument("paired_mse: pairing is not injective");
    seen[i] = 1;
    total += squared_distance(a.row(i), b.row(j));
  }
  return total / static_cast<double>(b.size());
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> theta, double step) {
  if (!(step > 0.0)) throw InvalidArgument("finite_diff_grad: step must be positive");
  std::vector<double> t(theta.begin(), theta.end());
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + step;
    const double fp = fn(t);
    t[i] = orig - step;
    const double fm = fn(t);
    t[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw DegenerateInput("finite_diff_grad: non-finite function value");
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

double relative_error(std::span<const double> approx, std::span<const double> exact) {
  require_same_dim(approx.size(), exact.size(), "relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i)
    worst = std::max(worst, std::abs(approx[i] - exact[i]) / (1.0 + std::abs(exact[i])));
  return worst;
}

std::uint64_t binomial(std::size_t n, std::size_t k) {
  if (k > n) return 0;
  k = std::min(k, n - k);
  // Saturates instead of overflowing.
  unsigned __int128 r = 1;
  for (std::size_t i = 1; i <= k; ++i) {
    r = r * (n - k + i) / i;
    if (r > std::numeric_limits<std::uint64_t>::max()) return std::numeric_limits<std::uint64_t>::max();
  }
  return static_cast<std::uint64_t>(r);
}

BatchEnumerator::BatchEnumerator(std::size_t n, std::size_t b) : n_(n), b_(b), total_(binomial(n, b)) {
  if (b == 0 || b > n) throw InvalidArgument("enumerate_batches: need 1 <= b <= n");
  if (total_ > kMaxSubsets) throw InvalidArgument("enumerate_batches: more than 1e6 subsets");
  idx_.resize(b);
  std::iota(idx_.begin(), idx_.end(), std::size_t{0});
}

void BatchEnumerator::next() {
  if (done_) return;
  std::size_t pos = b_;
  while (pos > 0) {
    --pos;
    if (idx_[pos] < n_ - b_ + pos) {
      ++idx_[pos];
      for (std::size_t j = pos + 1; j < b_; ++j) idx_[j] = idx_[j - 1] + 1;
      return;
    }
  }
  done_ = true;
}

std::vector<std::vector<std::size_t>> enumerate_batches(std::size_t n, std::size_t b) {
  std::vector<std::vector<std::size_t>> out;
  for (BatchEnumerator e(n, b); !e.done(); e.next()) out.push_back(e.current());
  return out;
}

std::vector<double> quantile_index_direct(const Points& cloud, std::span<const double> z) {
  require_same_dim(z.size(), cloud.dim(), "quantile_index_direct");
  const std::size_t d = cloud.dim();
  std::vector<double> acc(d, 0.0);
  std::size_t count = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) sq += (z[k] - cloud(i, k)) * (z[k] - cloud(i, k));
    const double len = std::sqrt(sq);
    if (len < 1e-12) continue;
    for (std::size_t k = 0; k < d; ++k) acc[k] += (z[k] - cloud(i, k)) / len;
    ++count;
  }
  if (count == 0) throw DegenerateInput("quantile_index_direct: undefined index");
  for (double& v : acc) v /= static_cast<double>(count);
  return acc;
}

double quantile_loss_direct(const Points& adapted, const Points& source,
                            std::span<const std::size_t> reference_indices) {
  if (reference_indices.empty()) throw InvalidArgument("quantile_loss_direct: no references");
  double total = 0.0;
  for (std::size_t r : reference_indices) {
    const auto z = source.row(r);
    const auto ua = quantile_index_direct(adapted, z);
    const auto us = quantile_index_direct(source, z);
    total += squared_distance(ua, us);
  }
  return total / static_cast<double>(reference_indices.size());
}

}  // namespace qmatch::oracles
