#pragma once

// Independent reference computations used to validate the optimized code
// paths. Nothing here calls into the loss, memory-bank or trainer modules,
// nor the SIMD kernels; everything is plain loops over the definitions.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "qmatch/types.hpp"

namespace qmatch::oracles {

// pairing[j] is the index in the first cloud matched to point j of the second.
struct Pairing {
  std::vector<std::size_t> target_to_source;

  static Pairing identity(std::size_t n);
  std::size_t size() const { return target_to_source.size(); }
};

struct TransportPlan {
  std::vector<std::size_t> assignment;  // assignment[i] = index in b matched to a_i
  double cost = 0.0;                    // mean matched squared distance

  double distance() const;
};

// Exact W2 between equal-size empirical measures (shortest augmenting path
// assignment, O(n^3)).
inline constexpr std::size_t kMaxExactTransport = 512;
TransportPlan wasserstein2(const Points& a, const Points& b);

// Brute force over all permutations; n <= 9.
TransportPlan wasserstein2_bruteforce(const Points& a, const Points& b);

// mean_j |a[pairing[j]] - b_j|^2
double paired_mse(const Points& a, const Points& b, const Pairing& pairing);

// Central differences (fn(t + s e_i) - fn(t - s e_i)) / 2s.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& fn,
                                     std::span<const double> theta, double step = 1e-5);

// max_i |a_i - b_i| / (1 + |b_i|)
double relative_error(std::span<const double> approx, std::span<const double> exact);

// All b-subsets of {0..n-1}, lexicographic.
class BatchEnumerator {
 public:
  static constexpr std::uint64_t kMaxSubsets = 1000000;

  BatchEnumerator(std::size_t n, std::size_t b);

  const std::vector<std::size_t>& current() const { return idx_; }
  bool done() const { return done_; }
  void next();

  std::uint64_t total() const { return total_; }

 private:
  std::size_t n_;
  std::size_t b_;
  std::vector<std::size_t> idx_;
  bool done_ = false;
  std::uint64_t total_;
};

std::uint64_t binomial(std::size_t n, std::size_t k);

std::vector<std::vector<std::size_t>> enumerate_batches(std::size_t n, std::size_t b);

// U(z) = mean over non-coincident i of (z - x_i)/|z - x_i|.
std::vector<double> quantile_index_direct(const Points& cloud, std::span<const double> z);

// mean_r |U_adapted(Z_r) - U_source(Z_r)|^2 by a double loop over the
// definition, with u_r recomputed from the source.
double quantile_loss_direct(const Points& adapted, const Points& source,
                            std::span<const std::size_t> reference_indices);

}  // namespace qmatch::oracles
