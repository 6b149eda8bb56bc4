#include "lgslam/kernels.hpp"

namespace lgslam::kernels {

namespace {

void squared_distances_scalar(const double* x, const double* y, const double* z,
                              std::size_t n, const double* q, double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - q[0];
    const double dy = y[i] - q[1];
    const double dz = z[i] - q[2];
    double d = dx * dx;
    d = d + dy * dy;
    d = d + dz * dz;
    out[i] = d;
  }
}

std::size_t count_within_scalar(const double* x, const double* y, const double* z,
                                std::size_t n, const double* q, double r2) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - q[0];
    const double dy = y[i] - q[1];
    const double dz = z[i] - q[2];
    double d = dx * dx;
    d = d + dy * dy;
    d = d + dz * dz;
    count += d <= r2 ? 1 : 0;
  }
  return count;
}

void transform_points_scalar(const double* r, const double* t, const double* x,
                             const double* y, const double* z, std::size_t n,
                             double* ox, double* oy, double* oz) {
  for (std::size_t i = 0; i < n; ++i) {
    const double px = x[i], py = y[i], pz = z[i];
    ox[i] = ((r[0] * px + r[1] * py) + r[2] * pz) + t[0];
    oy[i] = ((r[3] * px + r[4] * py) + r[5] * pz) + t[1];
    oz[i] = ((r[6] * px + r[7] * py) + r[8] * pz) + t[2];
  }
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", squared_distances_scalar, count_within_scalar,
                                 transform_points_scalar};
  return table;
}

}  // namespace lgslam::kernels
