#include <cstdlib>
#include <cstring>

#include "lgslam/kernels.hpp"

namespace lgslam::kernels {

#ifdef LGSLAM_HAVE_AVX2_KERNELS
const KernelTable& avx2_kernel_table();
#endif

const KernelTable* avx2_kernels() {
#ifdef LGSLAM_HAVE_AVX2_KERNELS
  static const bool supported = __builtin_cpu_supports("avx2");
  if (supported) return &avx2_kernel_table();
#endif
  return nullptr;
}

const KernelTable& active_kernels() {
  static const KernelTable& chosen = [] () -> const KernelTable& {
    const char* forced = std::getenv("LGSLAM_KERNELS");
    if (forced != nullptr && std::strcmp(forced, "scalar") == 0) return scalar_kernels();
    if (const KernelTable* avx2 = avx2_kernels()) return *avx2;
    return scalar_kernels();
  }();
  return chosen;
}

}  // namespace lgslam::kernels
