#include "lgslam/normals.hpp"

#include <cmath>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace lgslam {

namespace {

Mat3 covariance_of(const PointCloud& cloud, const std::vector<Neighbor>& nn) {
  Vec3 mean = Vec3::Zero();
  for (const auto& n : nn) mean += cloud.points[n.index];
  mean /= static_cast<double>(nn.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& n : nn) {
    const Vec3 d = cloud.points[n.index] - mean;
    cov += d * d.transpose();
  }
  return cov / static_cast<double>(nn.size());
}

Vec3 orient_up(Vec3 n) {
  constexpr double kTie = 1e-12;
  bool flip = false;
  if (std::abs(n.z()) > kTie) flip = n.z() < 0.0;
  else if (std::abs(n.x()) > kTie) flip = n.x() < 0.0;
  else flip = n.y() < 0.0;
  return flip ? Vec3(-n) : n;
}

}  // namespace

std::vector<Mat3> neighborhood_covariances(const PointCloud& cloud, const KdTree& tree,
                                           std::size_t k) {
  std::vector<Mat3> out;
  out.reserve(cloud.size());
  const std::size_t kk = std::min(k, cloud.size());
  for (const auto& p : cloud.points) out.push_back(covariance_of(cloud, tree.nearest(p, kk)));
  return out;
}

PointCloud estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (cloud.size() < k || k < 3) {
    throw std::invalid_argument("estimate_normals requires cloud size >= k >= 3");
  }
  const KdTree tree(cloud);
  return estimate_normals(cloud, tree, k);
}

PointCloud estimate_normals(const PointCloud& cloud, const KdTree& tree, std::size_t k) {
  if (cloud.size() < k || k < 3) {
    throw std::invalid_argument("estimate_normals requires cloud size >= k >= 3");
  }
  PointCloud out = cloud;
  std::vector<Vec3> normals;
  normals.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    const Mat3 cov = covariance_of(cloud, tree.nearest(p, k));
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const Vec3 ev = eig.eigenvalues();  // ascending
    const double scale = std::max(ev(2), 1e-300);
    if (ev(1) <= 1e-10 * scale || ev(2) <= 0.0) {
      normals.push_back(Vec3::Zero());
      continue;
    }
    normals.push_back(orient_up(eig.eigenvectors().col(0).normalized()));
  }
  out.normals = std::move(normals);
  return out;
}

}  // namespace lgslam
