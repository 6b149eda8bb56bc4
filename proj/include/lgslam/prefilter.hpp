#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "lgslam/point_cloud.hpp"

namespace lgslam {

enum class DownsampleMethod { VoxelGrid, None };
enum class OutlierMethod { Radius, None };

struct PrefiltererConfig {
  DownsampleMethod downsample_method = DownsampleMethod::VoxelGrid;
  double downsample_resolution = 0.25;
  OutlierMethod outlier_method = OutlierMethod::Radius;
  double radius = 0.4;
  std::size_t min_neighbors = 2;

  void validate() const;
};

/// Voxel-grid downsampling on an origin-anchored grid; one centroid per
/// occupied voxel, emitted in order of first occupancy. Normals are dropped.
PointCloud downsample(const PointCloud& cloud, double resolution);

using VoxelKey = std::array<std::int64_t, 3>;

/// Integer voxel coordinate of p (floor(p / resolution) per axis).
VoxelKey voxel_of(const Point3& p, double resolution);

/// Keeps points with at least min_neighbors other points within radius.
/// Partitions the cloud into four xy quadrants (octant pairs sharing an x/y
/// sign), each padded by `radius`, and filters them concurrently.
PointCloud remove_outliers(const PointCloud& cloud, double radius, std::size_t min_neighbors);

/// Whole-cloud single-threaded reference for remove_outliers.
PointCloud remove_outliers_sequential(const PointCloud& cloud, double radius,
                                      std::size_t min_neighbors);

/// Downsample then outlier removal, as configured.
PointCloud prefilter(const PointCloud& cloud, const PrefiltererConfig& cfg);

}  // namespace lgslam
