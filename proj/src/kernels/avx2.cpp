#include "qmatch/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>
#include <vector>

namespace qmatch::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

std::size_t direction_sum_avx2(const double* panel, std::size_t n, std::size_t d,
                               const double* z, double eps, double* inv, double* sum) {
  // Pass 1: inverse distances, four points per register.
  double* inv_out = inv;
  std::vector<double> scratch;
  if (!inv_out) {
    scratch.resize(n);
    inv_out = scratch.data();
  }
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d one = _mm256_set1_pd(1.0);
  const std::size_t n4 = n & ~std::size_t{3};
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    __m256d sq = _mm256_setzero_pd();
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(z[k]), _mm256_loadu_pd(panel + k * n + i));
      sq = _mm256_add_pd(sq, _mm256_mul_pd(diff, diff));
    }
    const __m256d dist = _mm256_sqrt_pd(sq);
    const __m256d keep = _mm256_cmp_pd(dist, veps, _CMP_GE_OQ);
    const __m256d iv = _mm256_and_pd(keep, _mm256_div_pd(one, dist));
    _mm256_storeu_pd(inv_out + i, iv);
    count += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(keep)));
  }
  for (; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      const double diff = z[k] - panel[k * n + i];
      sq += diff * diff;
    }
    const double dist = std::sqrt(sq);
    if (dist >= eps) {
      inv_out[i] = 1.0 / dist;
      ++count;
    } else {
      inv_out[i] = 0.0;
    }
  }

  // Pass 2: one contiguous sweep per coordinate.
  for (std::size_t k = 0; k < d; ++k) {
    const double* col = panel + k * n;
    const __m256d zk = _mm256_set1_pd(z[k]);
    __m256d acc = _mm256_setzero_pd();
    std::size_t j = 0;
    for (; j < n4; j += 4) {
      const __m256d diff = _mm256_sub_pd(zk, _mm256_loadu_pd(col + j));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(diff, _mm256_loadu_pd(inv_out + j)));
    }
    double s = hsum(acc);
    for (; j < n; ++j) s += (z[k] - col[j]) * inv_out[j];
    sum[k] = s;
  }
  return count;
}

void projected_accumulate_avx2(const double* panel, std::size_t n, std::size_t d,
                               const double* z, const double* inv, const double* w,
                               double scale, double* grad) {
  const std::size_t n4 = n & ~std::size_t{3};
  const __m256d vscale = _mm256_set1_pd(scale);
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    const __m256d iv = _mm256_loadu_pd(inv + i);
    __m256d vw = _mm256_setzero_pd();
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(z[k]), _mm256_loadu_pd(panel + k * n + i));
      vw = _mm256_add_pd(vw, _mm256_mul_pd(diff, _mm256_set1_pd(w[k])));
    }
    vw = _mm256_mul_pd(vw, iv);
    const __m256d s = _mm256_mul_pd(vscale, iv);
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d diff = _mm256_sub_pd(_mm256_set1_pd(z[k]), _mm256_loadu_pd(panel + k * n + i));
      const __m256d v = _mm256_mul_pd(diff, iv);
      const __m256d term = _mm256_mul_pd(s, _mm256_sub_pd(_mm256_set1_pd(w[k]), _mm256_mul_pd(v, vw)));
      double* g = grad + k * n + i;
      _mm256_storeu_pd(g, _mm256_add_pd(_mm256_loadu_pd(g), term));
    }
  }
  for (; i < n; ++i) {
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

double distance_sum_avx2(const double* panel, std::size_t n, std::size_t d, const double* q) {
  const std::size_t n4 = n & ~std::size_t{3};
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i < n4; i += 4) {
    __m256d sq = _mm256_setzero_pd();
    for (std::size_t k = 0; k < d; ++k) {
      const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(panel + k * n + i), _mm256_set1_pd(q[k]));
      sq = _mm256_add_pd(sq, _mm256_mul_pd(diff, diff));
    }
    acc = _mm256_add_pd(acc, _mm256_sqrt_pd(sq));
  }
  double total = hsum(acc);
  for (; i < n; ++i) {
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

const KernelTable* avx2_table() {
  static const KernelTable table{Isa::avx2, &direction_sum_avx2, &projected_accumulate_avx2,
                                 &distance_sum_avx2};
  return &table;
}

}  // namespace qmatch::kernels

#else

namespace qmatch::kernels {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace qmatch::kernels

#endif
