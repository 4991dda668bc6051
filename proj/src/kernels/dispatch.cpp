#include <cstdlib>
#include <cstring>

#include "qmatch/kernels.hpp"

namespace qmatch::kernels {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable& active() {
  static const KernelTable& table = [] () -> const KernelTable& {
    const char* force = std::getenv("QMATCH_FORCE_SCALAR");
    if (force && std::strcmp(force, "0") != 0) return scalar_table();
    if (const KernelTable* t = avx2_table(); t && cpu_has_avx2()) return *t;
    return scalar_table();
  }();
  return table;
}

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
  }
  return "unknown";
}

}  // namespace qmatch::kernels
