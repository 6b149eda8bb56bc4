#pragma once

#include <Eigen/Core>

#include "lgslam/point_cloud.hpp"

namespace lgslam {

struct ScanContextConfig {
  int rings = 20;
  int sectors = 60;
  double max_range = 80.0;
  double height_offset = 2.0;

  void validate() const;
};

/// Polar grid of the maximum (z + height_offset, clamped at 0) per bin, ring
/// along range and sector along azimuth in [0, 2pi).
struct ScanContext {
  Eigen::MatrixXd grid;      ///< rings x sectors
  Eigen::VectorXd ring_key;  ///< per-ring mean of grid row, yaw invariant
};

ScanContext make_scan_context(const PointCloud& cloud, const ScanContextConfig& cfg = {});

struct DescriptorMatch {
  double distance = 1.0;
  /// Best column shift s: query column j is compared with candidate column
  /// (j + s) mod sectors. shift_yaw() converts it to the yaw of the query
  /// sensor in the candidate frame.
  int shift = 0;
};

/// Minimum over column shifts of the mean cosine distance between
/// non-empty column pairs (1 when no pair is non-empty on both sides).
DescriptorMatch scan_context_distance(const ScanContext& query, const ScanContext& candidate);

double shift_yaw(int shift, int sectors);

}  // namespace lgslam
