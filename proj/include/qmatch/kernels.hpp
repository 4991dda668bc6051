#pragma once

// Data-parallel inner loops shared by the quantile index, the quantile-loss
// gradient and the solver. Every kernel has a scalar reference version and
// an AVX2 version; the active table is picked once at startup from CPUID.
//
// All kernels read points in column-major ("panel") layout: coordinate k of
// point i lives at panel[k * n + i]. Points closer than `coincidence_eps`
// to the probe are skipped and reported through the returned count.

#include <cstddef>
#include <string_view>

namespace qmatch::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
  Isa isa;

  // sum[k] = sum_i (z[k] - p_i[k]) / |z - p_i|, inv[i] = 1/|z - p_i| (0 when
  // coincident). `inv` may be null. Returns the number of non-coincident points.
  std::size_t (*direction_sum)(const double* panel, std::size_t n, std::size_t d,
                               const double* z, double coincidence_eps, double* inv,
                               double* sum);

  // grad[k*n + i] += scale * inv[i] * (w[k] - v_i[k] * <v_i, w>) where
  // v_i = (z - p_i) * inv[i]. Entries with inv[i] == 0 are untouched.
  void (*projected_accumulate)(const double* panel, std::size_t n, std::size_t d,
                               const double* z, const double* inv, const double* w,
                               double scale, double* grad);

  // Returns sum_i |p_i - q|.
  double (*distance_sum)(const double* panel, std::size_t n, std::size_t d,
                         const double* q);
};

const KernelTable& scalar_table();
// Null when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Table selected for this process. QMATCH_FORCE_SCALAR=1 in the environment
// pins the scalar table.
const KernelTable& active();

std::string_view isa_name(Isa isa);

}  // namespace qmatch::kernels
