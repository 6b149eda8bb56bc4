#include <cmath>
#include <random>

#include "doctest.h"
#include "lgslam/pose.hpp"

using namespace lgslam;

namespace {

// Rodrigues rotation about a unit axis, written out independently of so3_exp.
Mat3 rodrigues(const Vec3& axis, double angle) {
  const Vec3 k = axis.normalized();
  Mat3 kx;
  kx << 0, -k.z(), k.y(), k.z(), 0, -k.x(), -k.y(), k.x(), 0;
  return Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
}

Pose random_pose(std::mt19937& rng, double max_angle = 3.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Vec3 axis(u(rng), u(rng), u(rng));
  const double angle = max_angle * std::abs(u(rng));
  return {rodrigues(axis, angle), Vec3(10 * u(rng), 10 * u(rng), 10 * u(rng))};
}

}  // namespace

TEST_CASE("compose with inverse is identity") {
  std::mt19937 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Pose t = random_pose(rng);
    const Pose id = t * t.inverse();
    CHECK((id.rotation() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(id.translation().norm() < 1e-9);
  }
}

TEST_CASE("identity is the neutral element exactly") {
  std::mt19937 rng(2);
  const Pose t = random_pose(rng);
  CHECK(compose(Pose::identity(), t) == t);
  CHECK(compose(t, Pose::identity()) == t);
}

TEST_CASE("compose agrees with homogeneous matrix product") {
  const Pose a = Pose::from_yaw(M_PI / 2, Vec3(1, 2, 3));
  const Pose b = Pose::from_yaw(M_PI / 2, Vec3(-4, 0.5, 2));
  const Mat4 oracle = a.matrix() * b.matrix();
  const Pose c = compose(a, b);
  CHECK((c.matrix() - oracle).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::abs(std::abs(c.yaw()) - M_PI) < 1e-12);
  CHECK((c.translation() - (a.rotation() * b.translation() + a.translation())).norm() < 1e-12);

  std::mt19937 rng(3);
  for (int i = 0; i < 20; ++i) {
    const Pose p = random_pose(rng), q = random_pose(rng), r = random_pose(rng);
    CHECK(((p * q).matrix() - p.matrix() * q.matrix()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((((p * q) * r).matrix() - (p * (q * r)).matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("se3 exp and log") {
  CHECK(se3_log(Pose::identity()).norm() == 0.0);
  CHECK(se3_exp(Vec6::Zero()) == Pose::identity());

  for (double theta : {0.1, 1.0, 2.5, -1.3}) {
    Vec6 twist = Vec6::Zero();
    twist(5) = theta;
    const Pose p = se3_exp(twist);
    CHECK((p.rotation() - rodrigues(Vec3::UnitZ(), theta)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.translation().norm() == 0.0);
  }

  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi(k) = u(rng) * (k < 3 ? 5.0 : 0.57);
    const Pose p = se3_exp(xi);
    const Pose back = se3_exp(se3_log(p));
    worst = std::max(worst, (back.matrix() - p.matrix()).cwiseAbs().maxCoeff());
    worst = std::max(worst, (se3_log(p) - xi).cwiseAbs().maxCoeff());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("se3 log rejects angles at pi") {
  CHECK_THROWS_AS(se3_log(Pose::from_yaw(M_PI)), BranchAmbiguityError);
  CHECK_NOTHROW(se3_log(Pose::from_yaw(M_PI - 1e-3)));
}

TEST_CASE("se3 left jacobian inverse is the inverse and matches differences") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi(k) = u(rng) * (i < 10 ? 1e-4 : 1.0);
    const Mat6 prod = se3_left_jacobian(xi) * se3_left_jacobian_inverse(xi);
    CHECK((prod - Mat6::Identity()).cwiseAbs().maxCoeff() < 1e-9);

    // log(exp(d) * exp(xi)) ~ xi + Jl^-1 d
    const double h = 1e-6;
    Mat6 numeric;
    for (int k = 0; k < 6; ++k) {
      Vec6 d = Vec6::Zero();
      d(k) = h;
      numeric.col(k) = (se3_log(se3_exp(d) * se3_exp(xi)) - se3_log(se3_exp(-d) * se3_exp(xi))) / (2 * h);
    }
    CHECK((numeric - se3_left_jacobian_inverse(xi)).cwiseAbs().maxCoeff() < 1e-6);
  }
}

TEST_CASE("adjoint moves twists across a pose") {
  std::mt19937 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    const Pose t = random_pose(rng);
    Vec6 xi;
    for (int k = 0; k < 6; ++k) xi(k) = 0.3 * u(rng);
    const Pose lhs = t * se3_exp(xi) * t.inverse();
    const Pose rhs = se3_exp(adjoint(t) * xi);
    CHECK((lhs.matrix() - rhs.matrix()).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("long composition chains stay on SO3 with re-orthonormalization") {
  Vec6 xi;
  xi << 0.01, -0.02, 0.005, 0.001, -0.002, 0.003;
  const Pose step = se3_exp(xi);
  Pose acc;
  for (int i = 1; i <= 1000000; ++i) {
    acc = acc * step;
    if (i % 1000 == 0) acc = acc.orthonormalized();
  }
  CHECK(acc.orthonormality_error() < 1e-9);
}
