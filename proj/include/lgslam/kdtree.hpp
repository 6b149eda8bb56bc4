#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "lgslam/point_cloud.hpp"

namespace lgslam {

struct Neighbor {
  std::size_t index;
  double distance;  ///< Euclidean, meters
};

/// Exact nearest-neighbor index over a fixed set of 3D points. Build is
/// single-threaded; all queries are const and safe to run concurrently.
/// Equal distances are ordered by ascending point index.
class KdTree {
 public:
  explicit KdTree(std::span<const Point3> points, std::size_t leaf_size = 24);
  explicit KdTree(const PointCloud& cloud) : KdTree(std::span<const Point3>(cloud.points)) {}

  std::size_t size() const { return index_.size(); }
  bool empty() const { return index_.empty(); }

  /// k nearest points, ascending by distance. Throws std::logic_error on an
  /// empty tree and std::invalid_argument if k is 0 or exceeds size().
  std::vector<Neighbor> nearest(const Point3& query, std::size_t k) const;

  /// Single nearest neighbor with distance <= max_distance.
  std::optional<Neighbor> nearest_within(const Point3& query, double max_distance) const;

  /// Indices of all points with distance <= radius, ascending by index.
  std::vector<std::size_t> radius_search(const Point3& query, double radius) const;
  std::size_t count_within(const Point3& query, double radius) const;

 private:
  struct Node {
    double lo[3];
    double hi[3];
    std::size_t begin;
    std::size_t end;
    int left = -1;
    int right = -1;
  };

  int build(std::size_t begin, std::size_t end, std::size_t leaf_size);
  double box_distance2(const Node& node, const Point3& q) const;

  std::vector<Node> nodes_;
  std::vector<double> xs_, ys_, zs_;   // permuted coordinates
  std::vector<std::size_t> index_;     // permuted slot -> original index
};

}  // namespace lgslam
