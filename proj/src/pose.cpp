#include "lgslam/pose.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/SVD>

namespace lgslam {

namespace {

constexpr double kSmallAngle = 1e-4;
constexpr double kPi = 3.14159265358979323846;

}  // namespace

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double a, b;
  if (theta < kSmallAngle) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * w + b * w * w;
}

Vec3 so3_log(const Mat3& rotation) {
  const double cos_theta = std::clamp(0.5 * (rotation.trace() - 1.0), -1.0, 1.0);
  const double theta = std::acos(cos_theta);
  if (theta > kPi - 1e-6) {
    throw BranchAmbiguityError("so3_log: rotation angle too close to pi");
  }
  const Vec3 v(rotation(2, 1) - rotation(1, 2),
               rotation(0, 2) - rotation(2, 0),
               rotation(1, 0) - rotation(0, 1));
  if (theta < kSmallAngle) {
    // sin(theta)/theta ~ 1 - theta^2/6
    return 0.5 * (1.0 + theta * theta / 6.0) * v;
  }
  return 0.5 * theta / std::sin(theta) * v;
}

Mat3 so3_left_jacobian(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double a, b;
  if (theta < kSmallAngle) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Mat3::Identity() + a * w + b * w * w;
}

Mat3 so3_left_jacobian_inverse(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 w = skew(omega);
  double c;
  if (theta < kSmallAngle) {
    c = 1.0 / 12.0 + theta2 / 720.0;
  } else {
    c = 1.0 / theta2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  }
  return Mat3::Identity() - 0.5 * w + c * w * w;
}

Pose Pose::from_yaw(double yaw, const Vec3& t) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return {r, t};
}

Mat4 Pose::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

double Pose::rotation_angle() const {
  return std::acos(std::clamp(0.5 * (rotation_.trace() - 1.0), -1.0, 1.0));
}

double Pose::yaw() const { return std::atan2(rotation_(1, 0), rotation_(0, 0)); }

Pose Pose::orthonormalized() const {
  Eigen::JacobiSVD<Mat3> svd(rotation_, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 r = svd.matrixU() * svd.matrixV().transpose();
  if (r.determinant() < 0.0) {
    Mat3 u = svd.matrixU();
    u.col(2) *= -1.0;
    r = u * svd.matrixV().transpose();
  }
  return {r, translation_};
}

double Pose::orthonormality_error() const {
  const double ortho = (rotation_.transpose() * rotation_ - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(rotation_.determinant() - 1.0));
}

namespace {

// Coupling block Q(rho, phi) of the SE(3) left Jacobian.
Mat3 se3_q_matrix(const Vec3& rho, const Vec3& phi) {
  const double theta2 = phi.squaredNorm();
  const double theta = std::sqrt(theta2);
  const Mat3 rx = skew(rho);
  const Mat3 px = skew(phi);
  const Mat3 pxrx = px * rx;
  const Mat3 rxpx = rx * px;
  const Mat3 pxrxpx = pxrx * px;

  double c1, c2, c3;
  if (theta < 1e-3) {
    c1 = 1.0 / 6.0 - theta2 / 120.0;
    c2 = 1.0 / 24.0 - theta2 / 720.0;
    c3 = 1.0 / 120.0 - theta2 / 2520.0;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    const double theta4 = theta2 * theta2;
    c1 = (theta - s) / (theta2 * theta);
    c2 = (theta2 + 2.0 * c - 2.0) / (2.0 * theta4);
    c3 = (2.0 * theta - 3.0 * s + theta * c) / (2.0 * theta4 * theta);
  }
  return 0.5 * rx + c1 * (pxrx + rxpx + pxrxpx) +
         c2 * (px * pxrx + rxpx * px - 3.0 * pxrxpx) +
         c3 * (pxrxpx * px + px * pxrxpx);
}

}  // namespace

Pose se3_exp(const Vec6& twist) {
  const Vec3 rho = twist.head<3>();
  const Vec3 phi = twist.tail<3>();
  return {so3_exp(phi), so3_left_jacobian(phi) * rho};
}

Vec6 se3_log(const Pose& pose) {
  const Vec3 phi = so3_log(pose.rotation());
  Vec6 out;
  out.head<3>() = so3_left_jacobian_inverse(phi) * pose.translation();
  out.tail<3>() = phi;
  return out;
}

Mat6 se3_left_jacobian(const Vec6& twist) {
  const Vec3 rho = twist.head<3>();
  const Vec3 phi = twist.tail<3>();
  const Mat3 j = so3_left_jacobian(phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = j;
  out.bottomRightCorner<3, 3>() = j;
  out.topRightCorner<3, 3>() = se3_q_matrix(rho, phi);
  return out;
}

Mat6 se3_left_jacobian_inverse(const Vec6& twist) {
  const Vec3 rho = twist.head<3>();
  const Vec3 phi = twist.tail<3>();
  const Mat3 jinv = so3_left_jacobian_inverse(phi);
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = jinv;
  out.bottomRightCorner<3, 3>() = jinv;
  out.topRightCorner<3, 3>() = -jinv * se3_q_matrix(rho, phi) * jinv;
  return out;
}

Mat6 adjoint(const Pose& pose) {
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = pose.rotation();
  out.bottomRightCorner<3, 3>() = pose.rotation();
  out.topRightCorner<3, 3>() = skew(pose.translation()) * pose.rotation();
  return out;
}

double translation_error(const Pose& a, const Pose& b) {
  return (a.translation() - b.translation()).norm();
}

double rotation_error(const Pose& a, const Pose& b) {
  return (a.inverse() * b).rotation_angle();
}

}  // namespace lgslam
