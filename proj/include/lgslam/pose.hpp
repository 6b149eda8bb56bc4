#pragma once

#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace lgslam {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;
using Mat4 = Eigen::Matrix4d;

/// Raised by se3_log / so3_log when the rotation angle is too close to pi for
/// the principal branch to be unambiguous.
class BranchAmbiguityError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

Mat3 skew(const Vec3& v);

Mat3 so3_exp(const Vec3& omega);
Vec3 so3_log(const Mat3& rotation);
Mat3 so3_left_jacobian(const Vec3& omega);
Mat3 so3_left_jacobian_inverse(const Vec3& omega);

/// Rigid transform p' = R p + t. Composition a * b applies b first, then a.
class Pose {
 public:
  Pose() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}
  Pose(const Mat3& rotation, const Vec3& translation)
      : rotation_(rotation), translation_(translation) {}

  static Pose identity() { return {}; }
  static Pose from_translation(const Vec3& t) { return {Mat3::Identity(), t}; }
  static Pose from_quaternion(const Eigen::Quaterniond& q, const Vec3& t) {
    return {q.normalized().toRotationMatrix(), t};
  }
  /// Rotation about +z by `yaw` radians followed by translation t.
  static Pose from_yaw(double yaw, const Vec3& t = Vec3::Zero());
  static Pose from_matrix(const Mat4& m) {
    return {m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()};
  }

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }

  Pose operator*(const Pose& rhs) const {
    return {rotation_ * rhs.rotation_, rotation_ * rhs.translation_ + translation_};
  }
  Vec3 operator*(const Vec3& p) const { return rotation_ * p + translation_; }

  Pose inverse() const {
    const Mat3 rt = rotation_.transpose();
    return {rt, -(rt * translation_)};
  }

  Mat4 matrix() const;
  Eigen::Quaterniond quaternion() const { return Eigen::Quaterniond(rotation_).normalized(); }

  /// Angle of the rotation part in [0, pi].
  double rotation_angle() const;
  double yaw() const;

  /// Projects the rotation back onto SO(3); used after long composition chains.
  Pose orthonormalized() const;

  /// max |R^T R - I| and |det R - 1|.
  double orthonormality_error() const;

  bool operator==(const Pose&) const = default;

 private:
  Mat3 rotation_;
  Vec3 translation_;
};

/// Compose (applies b then a). Same as a * b.
inline Pose compose(const Pose& a, const Pose& b) { return a * b; }

// Twists are ordered (rho, omega): translational part first, rotational last.
Pose se3_exp(const Vec6& twist);
Vec6 se3_log(const Pose& pose);
Mat6 se3_left_jacobian(const Vec6& twist);
Mat6 se3_left_jacobian_inverse(const Vec6& twist);
inline Mat6 se3_right_jacobian_inverse(const Vec6& twist) {
  return se3_left_jacobian_inverse(-twist);
}

/// Ad(T) such that T * exp(xi) * T^-1 = exp(Ad(T) xi).
Mat6 adjoint(const Pose& pose);

/// Translation distance + rotation angle between two poses.
double translation_error(const Pose& a, const Pose& b);
double rotation_error(const Pose& a, const Pose& b);

}  // namespace lgslam
