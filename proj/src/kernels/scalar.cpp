#include "qmatch/kernels.hpp"

#include <cmath>

namespace qmatch::kernels {
namespace {

std::size_t direction_sum_scalar(const double* panel, std::size_t n, std::size_t d,
                                 const double* z, double eps, double* inv, double* sum) {
  for (std::size_t k = 0; k < d; ++k) sum[k] = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = z[k] - panel[k * n + i];
      sq += diff * diff;
    }
    const double dist = std::sqrt(sq);
    if (!(dist >= eps)) {
      if (inv) inv[i] = 0.0;
      continue;
    }
    const double iv = 1.0 / dist;
    if (inv) inv[i] = iv;
    ++count;
    for (std::size_t k = 0; k < d; ++k) sum[k] += (z[k] - panel[k * n + i]) * iv;
  }
  return count;
}

void projected_accumulate_scalar(const double* panel, std::size_t n, std::size_t d,
                                 const double* z, const double* inv, const double* w,
                                 double scale, double* grad) {
  for (std::size_t i = 0; i < n; ++i) {
    const double iv = inv[i];
    if (iv == 0.0) continue;
    double vw = 0.0;
    for (std::size_t k = 0; k < d; ++k) vw += (z[k] - panel[k * n + i]) * w[k];
    vw *= iv;
    const double s = scale * iv;
    for (std::size_t k = 0; k < d; ++k) {
      const double v = (z[k] - panel[k * n + i]) * iv;
      grad[k * n + i] += s * (w[k] - v * vw);
    }
  }
}

double distance_sum_scalar(const double* panel, std::size_t n, std::size_t d, const double* q) {
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = panel[k * n + i] - q[k];
      sq += diff * diff;
    }
    total += std::sqrt(sq);
  }
  return total;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Isa::scalar, &direction_sum_scalar, &projected_accumulate_scalar,
                                 &distance_sum_scalar};
  return table;
}

}  // namespace qmatch::kernels
