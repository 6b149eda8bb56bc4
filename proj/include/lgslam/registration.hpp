#pragma once

#include <cstddef>
#include <memory>
#include <mutex>
#include <span>
#include <utility>
#include <vector>

#include "lgslam/kdtree.hpp"
#include "lgslam/point_cloud.hpp"

namespace lgslam {

enum class RegistrationMethod { IcpPointToPoint, IcpPointToPlane, Gicp };

struct RegistrationConfig {
  RegistrationMethod method = RegistrationMethod::Gicp;
  int max_iterations = 64;
  /// Stop once |dt| + angle(dR) of an update falls below this.
  double transformation_epsilon = 0.1;
  double max_correspondence_distance = 2.0;
  std::size_t covariance_knn = 20;

  void validate() const;
};

struct RegistrationResult {
  Pose transform;  ///< maps source points into the target frame
  /// Mean squared distance over source points whose nearest target point is
  /// within max_correspondence_distance at the final transform; +inf when
  /// the match failed.
  double fitness = 0.0;
  int iterations_used = 0;
  bool converged = false;
  std::size_t correspondences = 0;
  /// Objective value at the start of each iteration (method-specific).
  std::vector<double> objective_trace;
};

/// A cloud plus its search index and lazily computed GICP covariances.
/// Immutable from the caller's point of view and safe to share across
/// threads; registration callers that match repeatedly against the same
/// cloud (tracker keyframes, loop candidates) should keep one around.
class PreparedCloud {
 public:
  explicit PreparedCloud(std::shared_ptr<const PointCloud> cloud);
  explicit PreparedCloud(PointCloud cloud)
      : PreparedCloud(std::make_shared<const PointCloud>(std::move(cloud))) {}

  const PointCloud& cloud() const { return *cloud_; }
  std::shared_ptr<const PointCloud> shared_cloud() const { return cloud_; }
  const KdTree& tree() const { return tree_; }

  /// Regularized plane covariances: eigenvalues replaced by (1, 1, 1e-3).
  const std::vector<Mat3>& plane_covariances(std::size_t knn) const;
  /// Estimated (or cloud-supplied) normals.
  const std::vector<Vec3>& normals(std::size_t knn) const;

 private:
  std::shared_ptr<const PointCloud> cloud_;
  KdTree tree_;
  mutable std::mutex mutex_;
  mutable std::size_t cov_knn_ = 0;
  mutable std::vector<Mat3> covariances_;
  mutable std::size_t normal_knn_ = 0;
  mutable std::vector<Vec3> normals_;
};

RegistrationResult align(const PreparedCloud& source, const PreparedCloud& target,
                         const Pose& guess, const RegistrationConfig& cfg);
RegistrationResult align(const PointCloud& source, const PointCloud& target, const Pose& guess,
                         const RegistrationConfig& cfg);

/// Fitness (as in RegistrationResult) of `transform` without optimizing;
/// +inf when fewer than 10 source points have a partner within range.
double fitness_score(const PreparedCloud& source, const PreparedCloud& target,
                     const Pose& transform, double max_correspondence_distance);

using Correspondence = std::pair<Point3, Point3>;  // (source, target)

/// Closed-form least-squares rigid transform mapping sources onto targets
/// (SVD of the cross-covariance, reflection corrected). Throws
/// std::domain_error when the pairs are collinear or too few.
Pose icp_p2p_step(std::span<const Correspondence> pairs);

struct GicpCorrespondence {
  Point3 source;
  Point3 target;
  Mat3 source_cov;
  Mat3 target_cov;
};

struct GicpEvaluation {
  double cost = 0.0;
  /// d cost / d xi for a left perturbation exp(xi) * transform, xi = (rho, omega).
  Vec6 gradient = Vec6::Zero();
  std::size_t used = 0;
};

/// Sum over pairs of d^T (C_t + R C_s R^T)^-1 d with d = T p - q. Pairs with a
/// singular combined covariance are skipped.
GicpEvaluation gicp_objective(std::span<const GicpCorrespondence> pairs, const Pose& transform);

/// Regularizes a neighborhood covariance to eigenvalues (1, 1, epsilon).
Mat3 regularize_plane_covariance(const Mat3& cov, double epsilon = 1e-3);

}  // namespace lgslam
