#pragma once

#include <cstddef>

#include "lgslam/kdtree.hpp"
#include "lgslam/point_cloud.hpp"

namespace lgslam {

/// Per-point normals from the k-nearest-neighbor covariance (smallest
/// eigenvector), oriented toward +z. Ties (n_z == 0) orient toward +x, then +y.
/// Neighborhoods of rank < 2 get a zero normal, see normal_is_valid().
/// Requires cloud.size() >= k >= 3.
PointCloud estimate_normals(const PointCloud& cloud, std::size_t k);
PointCloud estimate_normals(const PointCloud& cloud, const KdTree& tree, std::size_t k);

inline bool normal_is_valid(const Vec3& n) { return n.squaredNorm() > 0.5; }

/// Covariance of the k nearest neighbors of each point (k includes the point).
std::vector<Mat3> neighborhood_covariances(const PointCloud& cloud, const KdTree& tree,
                                           std::size_t k);

}  // namespace lgslam
