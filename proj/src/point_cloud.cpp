#include "lgslam/point_cloud.hpp"

namespace lgslam {

PointCloud PointCloud::transformed(const Pose& pose) const {
  PointCloud out = empty_like();
  out.points.reserve(points.size());
  for (const auto& p : points) out.points.push_back(pose * p);
  if (normals) {
    std::vector<Vec3> rotated;
    rotated.reserve(normals->size());
    for (const auto& n : *normals) rotated.push_back(pose.rotation() * n);
    out.normals = std::move(rotated);
  }
  return out;
}

}  // namespace lgslam
