#include "lgslam/floor_detector.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "lgslam/kdtree.hpp"
#include "lgslam/normals.hpp"

namespace lgslam {

namespace {

Eigen::Vector4d oriented(Vec3 n, double d) {
  if (n.z() < 0) {
    n = -n;
    d = -d;
  }
  return {n.x(), n.y(), n.z(), d};
}

double plane_distance(const Eigen::Vector4d& plane, const Point3& p) {
  return std::abs(plane.head<3>().dot(p) + plane[3]);
}

}  // namespace

void FloorConfig::validate() const {
  if (!(clip_min_z < clip_max_z)) throw std::invalid_argument("floor clip range is empty");
  if (!(normal_vertical_max_angle > 0 && normal_vertical_max_angle < 0.5 * M_PI)) {
    throw std::invalid_argument("floor_normal_max_angle must be in (0, 90) degrees");
  }
  if (ransac_iterations < 1 || !(ransac_inlier_threshold > 0) || !(min_inlier_fraction > 0) ||
      !(rough_clip_radius > 0) || normal_knn < 3) {
    throw std::invalid_argument("invalid floor detector configuration");
  }
}

std::pair<Eigen::Vector4d, double> fit_plane(const std::vector<Point3>& points) {
  if (points.size() < 3) throw std::invalid_argument("plane fit needs at least 3 points");
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : points) centroid += p;
  centroid /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) cov += (p - centroid) * (p - centroid).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 n = eig.eigenvectors().col(0).normalized();
  const Eigen::Vector4d plane = oriented(n, -n.dot(centroid));
  const double rms = std::sqrt(std::max(0.0, eig.eigenvalues()[0]) / points.size());
  return {plane, rms};
}

FloorCoefficients detect_floor_planar(const PointCloud& cloud, const FloorConfig& cfg,
                                      std::vector<std::size_t>* inliers) {
  cfg.validate();
  FloorCoefficients out;
  out.timestamp = cloud.timestamp;
  out.mode = FloorMode::Planar;
  if (inliers) inliers->clear();

  PointCloud clipped;
  std::vector<std::size_t> origin;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double z = cloud.points[i].z();
    if (z >= cfg.clip_min_z && z <= cfg.clip_max_z) {
      clipped.points.push_back(cloud.points[i]);
      origin.push_back(i);
    }
  }
  if (clipped.size() < cfg.normal_knn) return out;

  const double min_cos = std::cos(cfg.normal_vertical_max_angle);
  const PointCloud with_normals = estimate_normals(clipped, cfg.normal_knn);
  std::vector<Point3> candidates;
  std::vector<std::size_t> candidate_origin;
  for (std::size_t i = 0; i < clipped.size(); ++i) {
    const Vec3& n = (*with_normals.normals)[i];
    if (normal_is_valid(n) && std::abs(n.z()) >= min_cos) {
      candidates.push_back(clipped.points[i]);
      candidate_origin.push_back(origin[i]);
    }
  }
  const std::size_t m = candidates.size();
  if (m < 3) return out;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, m - 1);
  Eigen::Vector4d best_plane;
  std::size_t best_count = 0;
  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    const Vec3 n = (candidates[j] - candidates[i]).cross(candidates[k] - candidates[i]);
    if (n.norm() < 1e-9) continue;
    const Vec3 unit = n.normalized();
    if (std::abs(unit.z()) < min_cos) continue;
    const Eigen::Vector4d plane = oriented(unit, -unit.dot(candidates[i]));
    std::size_t count = 0;
    for (const auto& p : candidates) {
      if (plane_distance(plane, p) <= cfg.ransac_inlier_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_plane = plane;
    }
  }
  if (best_count < 3 ||
      static_cast<double>(best_count) < cfg.min_inlier_fraction * static_cast<double>(m)) {
    return out;
  }

  std::vector<Point3> support;
  for (const auto& p : candidates) {
    if (plane_distance(best_plane, p) <= cfg.ransac_inlier_threshold) support.push_back(p);
  }
  const Eigen::Vector4d refined = fit_plane(support).first;

  std::size_t final_count = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (plane_distance(refined, candidates[i]) <= cfg.ransac_inlier_threshold) {
      ++final_count;
      if (inliers) inliers->push_back(candidate_origin[i]);
    }
  }
  out.plane = refined;
  out.valid = static_cast<double>(final_count) >= cfg.min_inlier_fraction * static_cast<double>(m);
  if (!out.valid && inliers) inliers->clear();
  return out;
}

FloorCoefficients detect_floor_rough(const PointCloud& cloud, const FloorConfig& cfg) {
  cfg.validate();
  FloorCoefficients out;
  out.timestamp = cloud.timestamp;
  out.mode = FloorMode::Rough;
  std::vector<Point3> near;
  const double r2 = cfg.rough_clip_radius * cfg.rough_clip_radius;
  for (const auto& p : cloud.points) {
    if (p.x() * p.x() + p.y() * p.y() <= r2) near.push_back(p);
  }
  if (near.size() < 3) return out;
  const auto [plane, rms] = fit_plane(near);
  if (!plane.allFinite() || plane.head<3>().norm() < 0.5) return out;
  out.plane = plane;
  out.valid = rms <= 2.0 * cfg.ransac_inlier_threshold;
  return out;
}

}  // namespace lgslam
