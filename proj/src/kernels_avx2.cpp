#include <immintrin.h>

#include "lgslam/kernels.hpp"

namespace lgslam::kernels {

namespace {

inline __m256d squared_distance4(const double* x, const double* y, const double* z,
                                 __m256d qx, __m256d qy, __m256d qz) {
  const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(x), qx);
  const __m256d dy = _mm256_sub_pd(_mm256_loadu_pd(y), qy);
  const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(z), qz);
  __m256d d = _mm256_mul_pd(dx, dx);
  d = _mm256_add_pd(d, _mm256_mul_pd(dy, dy));
  d = _mm256_add_pd(d, _mm256_mul_pd(dz, dz));
  return d;
}

void squared_distances_avx2(const double* x, const double* y, const double* z,
                            std::size_t n, const double* q, double* out) {
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, squared_distance4(x + i, y + i, z + i, qx, qy, qz));
  }
  if (i < n) scalar_kernels().squared_distances(x + i, y + i, z + i, n - i, q, out + i);
}

std::size_t count_within_avx2(const double* x, const double* y, const double* z,
                              std::size_t n, const double* q, double r2) {
  const __m256d qx = _mm256_set1_pd(q[0]);
  const __m256d qy = _mm256_set1_pd(q[1]);
  const __m256d qz = _mm256_set1_pd(q[2]);
  const __m256d limit = _mm256_set1_pd(r2);
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = squared_distance4(x + i, y + i, z + i, qx, qy, qz);
    const int mask = _mm256_movemask_pd(_mm256_cmp_pd(d, limit, _CMP_LE_OQ));
    count += static_cast<std::size_t>(__builtin_popcount(static_cast<unsigned>(mask)));
  }
  if (i < n) count += scalar_kernels().count_within(x + i, y + i, z + i, n - i, q, r2);
  return count;
}

void transform_points_avx2(const double* r, const double* t, const double* x,
                           const double* y, const double* z, std::size_t n,
                           double* ox, double* oy, double* oz) {
  __m256d rv[9];
  for (int k = 0; k < 9; ++k) rv[k] = _mm256_set1_pd(r[k]);
  const __m256d tx = _mm256_set1_pd(t[0]);
  const __m256d ty = _mm256_set1_pd(t[1]);
  const __m256d tz = _mm256_set1_pd(t[2]);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d px = _mm256_loadu_pd(x + i);
    const __m256d py = _mm256_loadu_pd(y + i);
    const __m256d pz = _mm256_loadu_pd(z + i);
    __m256d a = _mm256_add_pd(_mm256_mul_pd(rv[0], px), _mm256_mul_pd(rv[1], py));
    _mm256_storeu_pd(ox + i, _mm256_add_pd(_mm256_add_pd(a, _mm256_mul_pd(rv[2], pz)), tx));
    a = _mm256_add_pd(_mm256_mul_pd(rv[3], px), _mm256_mul_pd(rv[4], py));
    _mm256_storeu_pd(oy + i, _mm256_add_pd(_mm256_add_pd(a, _mm256_mul_pd(rv[5], pz)), ty));
    a = _mm256_add_pd(_mm256_mul_pd(rv[6], px), _mm256_mul_pd(rv[7], py));
    _mm256_storeu_pd(oz + i, _mm256_add_pd(_mm256_add_pd(a, _mm256_mul_pd(rv[8], pz)), tz));
  }
  if (i < n) {
    scalar_kernels().transform_points(r, t, x + i, y + i, z + i, n - i, ox + i, oy + i, oz + i);
  }
}

}  // namespace

const KernelTable& avx2_kernel_table() {
  static const KernelTable table{"avx2", squared_distances_avx2, count_within_avx2,
                                 transform_points_avx2};
  return table;
}

}  // namespace lgslam::kernels
