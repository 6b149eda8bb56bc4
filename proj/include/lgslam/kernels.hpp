#pragma once

#include <cstddef>

// Data-parallel inner loops over structure-of-arrays coordinates. Every kernel
// has a scalar reference and (on x86-64) an AVX2 variant chosen at runtime.
// Variants evaluate the same operations in the same order without fused
// multiply-add, so their outputs are bit-identical.

namespace lgslam::kernels {

struct KernelTable {
  const char* name;

  /// out[i] = |p_i - q|^2
  void (*squared_distances)(const double* x, const double* y, const double* z,
                            std::size_t n, const double* q, double* out);

  /// Number of i with |p_i - q|^2 <= r2.
  std::size_t (*count_within)(const double* x, const double* y, const double* z,
                              std::size_t n, const double* q, double r2);

  /// o = R p + t with R given row-major (9 values).
  void (*transform_points)(const double* rotation, const double* translation,
                           const double* x, const double* y, const double* z,
                           std::size_t n, double* ox, double* oy, double* oz);
};

const KernelTable& scalar_kernels();

/// nullptr when the AVX2 variant was not built or the CPU lacks AVX2.
const KernelTable* avx2_kernels();

/// Best supported table. Setting LGSLAM_KERNELS=scalar in the environment
/// forces the reference path.
const KernelTable& active_kernels();

}  // namespace lgslam::kernels
