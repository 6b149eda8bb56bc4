#include "lgslam/registration.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "lgslam/kernels.hpp"
#include "lgslam/normals.hpp"

namespace lgslam {

namespace {

constexpr std::size_t kMinCorrespondences = 10;

// Source coordinates in SoA layout plus a buffer for the transformed copy.
struct SourceBuffers {
  std::vector<double> x, y, z, tx, ty, tz;

  explicit SourceBuffers(const PointCloud& cloud) {
    const std::size_t n = cloud.size();
    x.resize(n); y.resize(n); z.resize(n);
    tx.resize(n); ty.resize(n); tz.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = cloud.points[i].x();
      y[i] = cloud.points[i].y();
      z[i] = cloud.points[i].z();
    }
  }

  void apply(const Pose& pose) {
    double r[9];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r[3 * i + j] = pose.rotation()(i, j);
    const double t[3] = {pose.translation().x(), pose.translation().y(), pose.translation().z()};
    kernels::active_kernels().transform_points(r, t, x.data(), y.data(), z.data(), x.size(),
                                               tx.data(), ty.data(), tz.data());
  }

  Point3 transformed(std::size_t i) const { return {tx[i], ty[i], tz[i]}; }
};

struct Match {
  std::size_t source;
  std::size_t target;
  double d2;
};

std::vector<Match> find_matches(const SourceBuffers& src, const KdTree& target, double max_dist) {
  std::vector<Match> out;
  out.reserve(src.x.size());
  for (std::size_t i = 0; i < src.x.size(); ++i) {
    if (auto nn = target.nearest_within(src.transformed(i), max_dist)) {
      out.push_back({i, nn->index, nn->distance * nn->distance});
    }
  }
  return out;
}

double truncated_mean(const SourceBuffers& src, const std::vector<Match>& matches,
                      double max_dist) {
  const double cap = max_dist * max_dist;
  double sum = cap * static_cast<double>(src.x.size() - matches.size());
  for (const auto& m : matches) sum += std::min(m.d2, cap);
  return sum / static_cast<double>(src.x.size());
}

double inlier_mean(const std::vector<Match>& matches) {
  double sum = 0.0;
  for (const auto& m : matches) sum += m.d2;
  return sum / static_cast<double>(matches.size());
}

double update_norm(const Pose& delta) {
  return delta.translation().norm() + delta.rotation_angle();
}

RegistrationResult failed(const Pose& transform, int iterations, std::vector<double> trace) {
  RegistrationResult r;
  r.transform = transform;
  r.fitness = std::numeric_limits<double>::infinity();
  r.iterations_used = iterations;
  r.converged = false;
  r.objective_trace = std::move(trace);
  return r;
}

void finish(RegistrationResult& result, SourceBuffers& src, const KdTree& target, double max_dist) {
  src.apply(result.transform);
  const auto matches = find_matches(src, target, max_dist);
  result.correspondences = matches.size();
  if (matches.size() < kMinCorrespondences) {
    result.converged = false;
    result.fitness = std::numeric_limits<double>::infinity();
    return;
  }
  result.fitness = inlier_mean(matches);
}

RegistrationResult align_p2p(const PreparedCloud& source, const PreparedCloud& target,
                             const Pose& guess, const RegistrationConfig& cfg) {
  SourceBuffers src(source.cloud());
  Pose transform = guess;
  std::vector<double> trace;
  std::vector<Correspondence> pairs;
  int iter = 0;
  bool converged = false;
  while (iter < cfg.max_iterations) {
    ++iter;
    src.apply(transform);
    const auto matches = find_matches(src, target.tree(), cfg.max_correspondence_distance);
    if (matches.size() < kMinCorrespondences) return failed(transform, iter, std::move(trace));
    trace.push_back(truncated_mean(src, matches, cfg.max_correspondence_distance));
    pairs.clear();
    for (const auto& m : matches) {
      pairs.emplace_back(src.transformed(m.source), target.cloud().points[m.target]);
    }
    Pose delta;
    try {
      delta = icp_p2p_step(pairs);
    } catch (const std::domain_error&) {
      return failed(transform, iter, std::move(trace));
    }
    transform = (delta * transform).orthonormalized();
    if (update_norm(delta) < cfg.transformation_epsilon) {
      converged = true;
      break;
    }
  }
  RegistrationResult result;
  result.transform = transform;
  result.iterations_used = iter;
  result.converged = converged;
  result.objective_trace = std::move(trace);
  finish(result, src, target.tree(), cfg.max_correspondence_distance);
  return result;
}

RegistrationResult align_p2plane(const PreparedCloud& source, const PreparedCloud& target,
                                 const Pose& guess, const RegistrationConfig& cfg) {
  if (!target.cloud().has_normals()) {
    throw std::invalid_argument("point-to-plane registration requires target normals");
  }
  const auto& normals = *target.cloud().normals;
  SourceBuffers src(source.cloud());
  Pose transform = guess;
  std::vector<double> trace;
  int iter = 0;
  bool converged = false;
  while (iter < cfg.max_iterations) {
    ++iter;
    src.apply(transform);
    const auto matches = find_matches(src, target.tree(), cfg.max_correspondence_distance);
    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    double cost = 0.0;
    std::size_t used = 0;
    for (const auto& m : matches) {
      const Vec3& n = normals[m.target];
      if (!normal_is_valid(n)) continue;
      const Point3 p = src.transformed(m.source);
      const double r = n.dot(p - target.cloud().points[m.target]);
      Vec6 j;
      j.head<3>() = n;
      j.tail<3>() = p.cross(n);
      h += j * j.transpose();
      b += j * r;
      cost += r * r;
      ++used;
    }
    if (used < kMinCorrespondences) return failed(transform, iter, std::move(trace));
    trace.push_back(cost / static_cast<double>(used));
    Eigen::LDLT<Mat6> ldlt(h);
    if (ldlt.info() != Eigen::Success) return failed(transform, iter, std::move(trace));
    const Vec6 xi = -ldlt.solve(b);
    if (!xi.allFinite()) return failed(transform, iter, std::move(trace));
    const Pose delta = se3_exp(xi);
    transform = (delta * transform).orthonormalized();
    if (update_norm(delta) < cfg.transformation_epsilon) {
      converged = true;
      break;
    }
  }
  RegistrationResult result;
  result.transform = transform;
  result.iterations_used = iter;
  result.converged = converged;
  result.objective_trace = std::move(trace);
  finish(result, src, target.tree(), cfg.max_correspondence_distance);
  return result;
}

RegistrationResult align_gicp(const PreparedCloud& source, const PreparedCloud& target,
                              const Pose& guess, const RegistrationConfig& cfg) {
  const auto& src_cov = source.plane_covariances(cfg.covariance_knn);
  const auto& tgt_cov = target.plane_covariances(cfg.covariance_knn);
  SourceBuffers src(source.cloud());
  Pose transform = guess;
  std::vector<double> trace;
  std::vector<GicpCorrespondence> pairs;
  int iter = 0;
  bool converged = false;
  while (iter < cfg.max_iterations) {
    ++iter;
    src.apply(transform);
    const auto matches = find_matches(src, target.tree(), cfg.max_correspondence_distance);
    if (matches.size() < kMinCorrespondences) return failed(transform, iter, std::move(trace));

    pairs.clear();
    for (const auto& m : matches) {
      pairs.push_back({source.cloud().points[m.source], target.cloud().points[m.target],
                       src_cov[m.source], tgt_cov[m.target]});
    }

    // Gauss-Newton with the combined covariance frozen at the current rotation.
    const Mat3& rot = transform.rotation();
    Mat6 h = Mat6::Zero();
    Vec6 b = Vec6::Zero();
    double cost = 0.0;
    for (const auto& c : pairs) {
      const Mat3 combined = c.target_cov + rot * c.source_cov * rot.transpose();
      Eigen::LDLT<Mat3> ldlt(combined);
      if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) continue;
      const Mat3 info = ldlt.solve(Mat3::Identity());
      const Point3 tp = transform * c.source;
      const Vec3 d = tp - c.target;
      Eigen::Matrix<double, 3, 6> j;
      j.leftCols<3>() = Mat3::Identity();
      j.rightCols<3>() = -skew(tp);
      h += j.transpose() * info * j;
      b += j.transpose() * info * d;
      cost += d.dot(info * d);
    }
    trace.push_back(cost / static_cast<double>(pairs.size()));

    Eigen::LDLT<Mat6> solver(h);
    Vec6 xi = solver.info() == Eigen::Success ? Vec6(-solver.solve(b)) : Vec6::Zero();
    if (!xi.allFinite()) xi.setZero();
    Pose candidate = (se3_exp(xi) * transform).orthonormalized();

    if (gicp_objective(pairs, candidate).cost > cost) {
      // Gauss-Newton overshot: steepest descent with backtracking on the exact objective.
      const GicpEvaluation here = gicp_objective(pairs, transform);
      const double g2 = here.gradient.squaredNorm();
      candidate = transform;
      if (g2 > 0.0) {
        double step = here.cost / g2;
        for (int k = 0; k < 30; ++k, step *= 0.5) {
          const Pose trial = (se3_exp(-step * here.gradient) * transform).orthonormalized();
          if (gicp_objective(pairs, trial).cost < here.cost) {
            candidate = trial;
            break;
          }
        }
      }
    }
    const Pose delta = candidate * transform.inverse();
    transform = candidate;
    if (update_norm(delta) < cfg.transformation_epsilon) {
      converged = true;
      break;
    }
  }
  RegistrationResult result;
  result.transform = transform;
  result.iterations_used = iter;
  result.converged = converged;
  result.objective_trace = std::move(trace);
  finish(result, src, target.tree(), cfg.max_correspondence_distance);
  return result;
}

}  // namespace

void RegistrationConfig::validate() const {
  if (max_iterations < 1) throw std::invalid_argument("max_iterations must be >= 1");
  if (!(transformation_epsilon > 0.0)) throw std::invalid_argument("transformation_epsilon must be > 0");
  if (!(max_correspondence_distance > 0.0)) {
    throw std::invalid_argument("max_correspondence_distance must be > 0");
  }
  if (covariance_knn < 3) throw std::invalid_argument("covariance_knn must be >= 3");
}

PreparedCloud::PreparedCloud(std::shared_ptr<const PointCloud> cloud)
    : cloud_(std::move(cloud)), tree_(cloud_->points) {}

Mat3 regularize_plane_covariance(const Mat3& cov, double epsilon) {
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Mat3 v = eig.eigenvectors();
  const Vec3 values(epsilon, 1.0, 1.0);
  return v * values.asDiagonal() * v.transpose();
}

const std::vector<Mat3>& PreparedCloud::plane_covariances(std::size_t knn) const {
  std::lock_guard<std::mutex> lock(mutex_);
  if (cov_knn_ != knn || covariances_.size() != cloud_->size()) {
    covariances_.clear();
    if (!cloud_->empty()) {
      const auto raw = neighborhood_covariances(*cloud_, tree_, knn);
      covariances_.reserve(raw.size());
      for (const auto& c : raw) covariances_.push_back(regularize_plane_covariance(c));
    }
    cov_knn_ = knn;
  }
  return covariances_;
}

const std::vector<Vec3>& PreparedCloud::normals(std::size_t knn) const {
  if (cloud_->normals) return *cloud_->normals;
  std::lock_guard<std::mutex> lock(mutex_);
  if (normal_knn_ != knn || normals_.size() != cloud_->size()) {
    if (cloud_->size() >= 3) {
      normals_ = *estimate_normals(*cloud_, tree_, std::min(knn, cloud_->size())).normals;
    } else {
      normals_.assign(cloud_->size(), Vec3::Zero());
    }
    normal_knn_ = knn;
  }
  return normals_;
}

RegistrationResult align(const PreparedCloud& source, const PreparedCloud& target,
                         const Pose& guess, const RegistrationConfig& cfg) {
  cfg.validate();
  if (source.cloud().empty() || target.cloud().empty()) {
    throw std::invalid_argument("align: source and target must be non-empty");
  }
  switch (cfg.method) {
    case RegistrationMethod::IcpPointToPoint: return align_p2p(source, target, guess, cfg);
    case RegistrationMethod::IcpPointToPlane: return align_p2plane(source, target, guess, cfg);
    case RegistrationMethod::Gicp: return align_gicp(source, target, guess, cfg);
  }
  throw std::logic_error("align: unknown method");
}

RegistrationResult align(const PointCloud& source, const PointCloud& target, const Pose& guess,
                         const RegistrationConfig& cfg) {
  return align(PreparedCloud(source), PreparedCloud(target), guess, cfg);
}

double fitness_score(const PreparedCloud& source, const PreparedCloud& target,
                     const Pose& transform, double max_correspondence_distance) {
  if (source.cloud().empty() || target.cloud().empty()) return std::numeric_limits<double>::infinity();
  SourceBuffers src(source.cloud());
  src.apply(transform);
  const auto matches = find_matches(src, target.tree(), max_correspondence_distance);
  if (matches.size() < kMinCorrespondences) return std::numeric_limits<double>::infinity();
  return inlier_mean(matches);
}

Pose icp_p2p_step(std::span<const Correspondence> pairs) {
  if (pairs.size() < 3) throw std::domain_error("icp_p2p_step: need at least 3 pairs");
  Vec3 mu_s = Vec3::Zero();
  Vec3 mu_t = Vec3::Zero();
  for (const auto& [s, t] : pairs) {
    mu_s += s;
    mu_t += t;
  }
  const double n = static_cast<double>(pairs.size());
  mu_s /= n;
  mu_t /= n;
  Mat3 cross = Mat3::Zero();
  Mat3 spread = Mat3::Zero();
  for (const auto& [s, t] : pairs) {
    cross += (s - mu_s) * (t - mu_t).transpose();
    spread += (s - mu_s) * (s - mu_s).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(spread);
  const Vec3 ev = eig.eigenvalues();
  if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) {
    throw std::domain_error("icp_p2p_step: correspondences are collinear");
  }
  Eigen::JacobiSVD<Mat3> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Mat3 u = svd.matrixU();
  const Mat3 v = svd.matrixV();
  Mat3 d = Mat3::Identity();
  if ((v * u.transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = v * d * u.transpose();
  return {r, mu_t - r * mu_s};
}

GicpEvaluation gicp_objective(std::span<const GicpCorrespondence> pairs, const Pose& transform) {
  GicpEvaluation out;
  const Mat3& rot = transform.rotation();
  for (const auto& c : pairs) {
    const Mat3 rotated_cov = rot * c.source_cov * rot.transpose();
    const Mat3 combined = c.target_cov + rotated_cov;
    Eigen::LDLT<Mat3> ldlt(combined);
    if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0)) continue;
    const Point3 tp = transform * c.source;
    const Vec3 d = tp - c.target;
    const Vec3 u = ldlt.solve(d);
    out.cost += d.dot(u);
    out.gradient.head<3>() += 2.0 * u;
    // Includes the dependence of the combined covariance on the rotation.
    out.gradient.tail<3>() += 2.0 * tp.cross(u) + 2.0 * u.cross(rotated_cov * u);
    ++out.used;
  }
  return out;
}

}  // namespace lgslam
