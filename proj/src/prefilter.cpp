#include "lgslam/prefilter.hpp"

#include <cmath>
#include <future>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "lgslam/kdtree.hpp"

namespace lgslam {

namespace {

struct VoxelHash {
  std::size_t operator()(const VoxelKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : k) {
      h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

// Keep flags for `members` (indices into cloud) computed against `members`
// only. Each member counts itself, hence the +1.
void flag_inliers(const PointCloud& cloud, const std::vector<std::size_t>& members,
                  const std::vector<std::size_t>& cores, double radius,
                  std::size_t min_neighbors, std::vector<char>& keep) {
  std::vector<Point3> local;
  local.reserve(members.size());
  for (std::size_t i : members) local.push_back(cloud.points[i]);
  const KdTree tree(local);
  for (std::size_t i : cores) {
    keep[i] = tree.count_within(cloud.points[i], radius) >= min_neighbors + 1 ? 1 : 0;
  }
}

PointCloud gather(const PointCloud& cloud, const std::vector<char>& keep) {
  PointCloud out = cloud.empty_like();
  std::vector<Vec3> normals;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!keep[i]) continue;
    out.points.push_back(cloud.points[i]);
    if (cloud.normals) normals.push_back((*cloud.normals)[i]);
  }
  if (cloud.normals) out.normals = std::move(normals);
  return out;
}

}  // namespace

void PrefiltererConfig::validate() const {
  if (!(downsample_resolution > 0.0)) throw std::invalid_argument("downsample_resolution must be > 0");
  if (!(radius > 0.0)) throw std::invalid_argument("radius must be > 0");
  if (min_neighbors < 1) throw std::invalid_argument("min_neighbors must be >= 1");
}

VoxelKey voxel_of(const Point3& p, double resolution) {
  return {static_cast<std::int64_t>(std::floor(p.x() / resolution)),
          static_cast<std::int64_t>(std::floor(p.y() / resolution)),
          static_cast<std::int64_t>(std::floor(p.z() / resolution))};
}

PointCloud downsample(const PointCloud& cloud, double resolution) {
  if (!(resolution > 0.0)) throw std::invalid_argument("downsample: resolution must be > 0");
  PointCloud out = cloud.empty_like();
  std::unordered_map<VoxelKey, std::size_t, VoxelHash> slot;
  slot.reserve(cloud.size());
  std::vector<Vec3> sums;
  std::vector<std::size_t> counts;
  for (const auto& p : cloud.points) {
    const auto [it, inserted] = slot.try_emplace(voxel_of(p, resolution), sums.size());
    if (inserted) {
      sums.push_back(p);
      counts.push_back(1);
    } else {
      sums[it->second] += p;
      ++counts[it->second];
    }
  }
  out.points.reserve(sums.size());
  for (std::size_t i = 0; i < sums.size(); ++i) {
    out.points.push_back(counts[i] == 1 ? sums[i] : Vec3(sums[i] / static_cast<double>(counts[i])));
  }
  return out;
}

PointCloud remove_outliers_sequential(const PointCloud& cloud, double radius,
                                      std::size_t min_neighbors) {
  std::vector<char> keep(cloud.size(), 0);
  if (cloud.empty()) return cloud.empty_like();
  std::vector<std::size_t> all(cloud.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  flag_inliers(cloud, all, all, radius, min_neighbors, keep);
  return gather(cloud, keep);
}

PointCloud remove_outliers(const PointCloud& cloud, double radius, std::size_t min_neighbors) {
  if (cloud.empty()) return cloud.empty_like();
  // Padding is slightly wider than radius so no neighbor is lost to rounding.
  const double pad = radius * (1.0 + 1e-9) + 1e-12;
  std::vector<std::size_t> members[4];
  std::vector<std::size_t> cores[4];
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    const int core = (p.x() >= 0.0 ? 1 : 0) | (p.y() >= 0.0 ? 2 : 0);
    cores[core].push_back(i);
    for (int q = 0; q < 4; ++q) {
      const double sx = (q & 1) ? 1.0 : -1.0;
      const double sy = (q & 2) ? 1.0 : -1.0;
      // Quadrant q spans sx*x >= 0 (or > 0 for the negative side); anything
      // within pad of that region may be a neighbor of one of its points.
      if (sx * p.x() >= -pad && sy * p.y() >= -pad) members[q].push_back(i);
    }
  }
  std::vector<char> keep(cloud.size(), 0);
  std::vector<std::future<void>> tasks;
  for (int q = 0; q < 4; ++q) {
    if (cores[q].empty()) continue;
    tasks.push_back(std::async(std::launch::async, [&, q] {
      flag_inliers(cloud, members[q], cores[q], radius, min_neighbors, keep);
    }));
  }
  for (auto& t : tasks) t.get();
  return gather(cloud, keep);
}

PointCloud prefilter(const PointCloud& cloud, const PrefiltererConfig& cfg) {
  cfg.validate();
  PointCloud out = cfg.downsample_method == DownsampleMethod::VoxelGrid
                       ? downsample(cloud, cfg.downsample_resolution)
                       : cloud;
  if (cfg.outlier_method == OutlierMethod::Radius) {
    out = remove_outliers(out, cfg.radius, cfg.min_neighbors);
  }
  if (out.empty()) spdlog::warn("prefilter: cloud at t={} is empty after filtering", cloud.timestamp);
  return out;
}

}  // namespace lgslam
