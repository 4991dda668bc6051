#pragma once

#include <cmath>
#include <vector>

#include "qmatch/rng.hpp"
#include "qmatch/types.hpp"

namespace qmatch::testing {

inline Points random_points(Rng& rng, std::size_t n, std::size_t d, double scale = 1.0) {
  Points p(n, d);
  for (double& v : p.data()) v = scale * rng.normal();
  return p;
}

inline Vec random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
  Vec v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

// Uniform direction with the given norm.
inline Vec random_index(Rng& rng, std::size_t d, double radius) {
  Vec u = random_vec(rng, d);
  const double s = radius / norm(u);
  for (double& x : u) x *= s;
  return u;
}

// Haar-ish orthogonal matrix via Gram-Schmidt on a Gaussian matrix, row-major.
inline std::vector<double> random_orthogonal(Rng& rng, std::size_t d) {
  std::vector<Vec> rows;
  while (rows.size() < d) {
    Vec v = random_vec(rng, d);
    for (const auto& r : rows) {
      const double p = dot(v, r);
      for (std::size_t k = 0; k < d; ++k) v[k] -= p * r[k];
    }
    const double len = norm(v);
    if (len < 1e-6) continue;
    for (double& x : v) x /= len;
    rows.push_back(v);
  }
  std::vector<double> m;
  for (const auto& r : rows) m.insert(m.end(), r.begin(), r.end());
  return m;
}

inline Vec mat_vec(const std::vector<double>& m, std::span<const double> x) {
  const std::size_t d = x.size();
  Vec y(d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) y[i] += m[i * d + j] * x[j];
  return y;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace qmatch::testing
