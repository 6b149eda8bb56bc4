#include "lgslam/scan_context.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lgslam {

void ScanContextConfig::validate() const {
  if (rings < 1 || sectors < 1) throw std::invalid_argument("scan context grid must be non-empty");
  if (!(max_range > 0)) throw std::invalid_argument("sc_max_range must be positive");
}

ScanContext make_scan_context(const PointCloud& cloud, const ScanContextConfig& cfg) {
  cfg.validate();
  ScanContext sc;
  sc.grid = Eigen::MatrixXd::Zero(cfg.rings, cfg.sectors);
  for (const auto& p : cloud.points) {
    const double range = std::hypot(p.x(), p.y());
    if (range >= cfg.max_range) continue;
    double azimuth = std::atan2(p.y(), p.x());
    if (azimuth < 0) azimuth += 2.0 * M_PI;
    const int ring = std::min(cfg.rings - 1, static_cast<int>(range / cfg.max_range * cfg.rings));
    const int sector =
        std::min(cfg.sectors - 1, static_cast<int>(azimuth / (2.0 * M_PI) * cfg.sectors));
    const double value = std::max(0.0, p.z() + cfg.height_offset);
    sc.grid(ring, sector) = std::max(sc.grid(ring, sector), value);
  }
  sc.ring_key = sc.grid.rowwise().mean();
  return sc;
}

DescriptorMatch scan_context_distance(const ScanContext& query, const ScanContext& candidate) {
  if (query.grid.rows() != candidate.grid.rows() || query.grid.cols() != candidate.grid.cols()) {
    throw std::invalid_argument("scan context shapes differ");
  }
  const Eigen::Index sectors = query.grid.cols();
  const Eigen::RowVectorXd qn = query.grid.colwise().norm();
  const Eigen::RowVectorXd cn = candidate.grid.colwise().norm();
  const Eigen::MatrixXd dots = query.grid.transpose() * candidate.grid;  // (q col, c col)

  DescriptorMatch best;
  best.distance = 2.0;
  for (Eigen::Index s = 0; s < sectors; ++s) {
    double sum = 0.0;
    int valid = 0;
    for (Eigen::Index j = 0; j < sectors; ++j) {
      const Eigen::Index k = (j + s) % sectors;
      if (qn[j] == 0.0 || cn[k] == 0.0) continue;
      sum += dots(j, k) / (qn[j] * cn[k]);
      ++valid;
    }
    const double distance = valid ? 1.0 - sum / valid : 1.0;
    if (distance < best.distance) {
      best.distance = distance;
      best.shift = static_cast<int>(s);
    }
  }
  return best;
}

double shift_yaw(int shift, int sectors) {
  double yaw = 2.0 * M_PI * shift / sectors;
  if (yaw > M_PI) yaw -= 2.0 * M_PI;
  return yaw;
}

}  // namespace lgslam
