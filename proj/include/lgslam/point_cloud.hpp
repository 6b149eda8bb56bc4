#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lgslam/pose.hpp"

namespace lgslam {

using Point3 = Vec3;

struct PointCloud {
  std::vector<Point3> points;
  /// Unit normals, same length as points when present. A zero vector marks a
  /// point whose neighborhood was too degenerate to estimate a normal.
  std::optional<std::vector<Vec3>> normals;
  double timestamp = 0.0;
  std::string frame_id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return normals.has_value(); }

  /// Copy with points (and normals) mapped through `pose`. Metadata preserved.
  PointCloud transformed(const Pose& pose) const;

  /// Empty cloud carrying this cloud's timestamp and frame.
  PointCloud empty_like() const {
    PointCloud out;
    out.timestamp = timestamp;
    out.frame_id = frame_id;
    return out;
  }
};

}  // namespace lgslam
