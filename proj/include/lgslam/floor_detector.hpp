#pragma once

#include <cstdint>
#include <vector>

#include "lgslam/point_cloud.hpp"

namespace lgslam {

enum class FloorMode { Planar, Rough };

struct FloorCoefficients {
  Eigen::Vector4d plane = Eigen::Vector4d(0, 0, 1, 0);  ///< (a, b, c, d), unit normal, c > 0
  double timestamp = 0.0;
  FloorMode mode = FloorMode::Planar;
  bool valid = false;

  Vec3 normal() const { return plane.head<3>(); }
  double offset() const { return plane[3]; }
};

struct FloorConfig {
  double clip_min_z = -2.5;
  double clip_max_z = -1.0;
  double normal_vertical_max_angle = 20.0 * M_PI / 180.0;
  int ransac_iterations = 200;
  double ransac_inlier_threshold = 0.1;
  double min_inlier_fraction = 0.3;
  double rough_clip_radius = 3.0;
  std::size_t normal_knn = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Clip by height, drop points with non-vertical normals, RANSAC a plane and
/// refine it by total least squares over the inliers. `inliers`, if given,
/// receives indices into `cloud` within the threshold of the final plane.
FloorCoefficients detect_floor_planar(const PointCloud& cloud, const FloorConfig& cfg,
                                      std::vector<std::size_t>* inliers = nullptr);

/// Least-squares plane through the points within rough_clip_radius
/// (horizontally) of the sensor.
FloorCoefficients detect_floor_rough(const PointCloud& cloud, const FloorConfig& cfg);

/// Total-least-squares plane (centroid + smallest covariance eigenvector),
/// oriented c >= 0. Second value is the RMS point-to-plane residual.
std::pair<Eigen::Vector4d, double> fit_plane(const std::vector<Point3>& points);

}  // namespace lgslam
