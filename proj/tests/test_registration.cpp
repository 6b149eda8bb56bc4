#include <cmath>
#include <random>

#include "doctest.h"
#include "lgslam/normals.hpp"
#include "lgslam/registration.hpp"
#include "test_support.hpp"

using namespace lgslam;
using lgslam::testing::random_gicp_pairs;
using lgslam::testing::random_motion;
using lgslam::testing::structured_cloud;

namespace {

constexpr RegistrationMethod kAllMethods[] = {RegistrationMethod::IcpPointToPoint,
                                              RegistrationMethod::IcpPointToPlane,
                                              RegistrationMethod::Gicp};

RegistrationConfig tight(RegistrationMethod m) {
  RegistrationConfig cfg;
  cfg.method = m;
  cfg.transformation_epsilon = 1e-8;
  cfg.max_iterations = 100;
  return cfg;
}

PointCloud with_normals(const PointCloud& c) { return estimate_normals(c, 10); }

double deg(double rad) { return rad * 180.0 / M_PI; }

}  // namespace

TEST_CASE("aligning a cloud to itself gives the identity") {
  const PointCloud c = with_normals(structured_cloud(500, 1));
  for (auto m : kAllMethods) {
    const auto r = align(c, c, Pose::identity(), tight(m));
    CHECK(r.converged);
    CHECK(r.transform.translation().norm() < 1e-9);
    CHECK(r.transform.rotation_angle() < 1e-9);
    CHECK(r.fitness < 1e-12);
  }
}

TEST_CASE("recovers a 1 m translation from a guess 0.5 m off") {
  const PointCloud src = with_normals(structured_cloud(500, 2));
  const Pose truth = Pose::from_translation({1.0, 0.0, 0.0});
  // target = source moved by truth^-1 so that truth maps source onto target
  const PointCloud tgt = with_normals(src.transformed(truth));
  const Pose guess = Pose::from_translation({0.6, 0.3, 0.0});
  for (auto m : kAllMethods) {
    const auto r = align(src, tgt, guess, tight(m));
    CHECK(r.converged);
    CHECK(translation_error(r.transform, truth) < 1e-3);
  }
}

TEST_CASE("table defaults converge on a small motion") {
  const PointCloud src = structured_cloud(2000, 3);
  const Pose truth = Pose::from_yaw(0.03, {0.8, 0.1, 0.0});
  const PointCloud tgt = src.transformed(truth);
  RegistrationConfig cfg;  // GICP, 64 iterations, epsilon 0.1
  const auto r = align(src, tgt, Pose::identity(), cfg);
  CHECK(r.converged);
  CHECK(r.iterations_used < 64);
  CHECK(translation_error(r.transform, truth) < 0.05);
}

TEST_CASE("icp_p2p_step closed form") {
  std::vector<Correspondence> aligned{{{0, 0, 0}, {0, 0, 0}}, {{1, 0, 0}, {1, 0, 0}}, {{0, 2, 1}, {0, 2, 1}}};
  const Pose id = icp_p2p_step(aligned);
  CHECK((id.matrix() - Mat4::Identity()).cwiseAbs().maxCoeff() < 1e-12);

  const Pose yaw30 = Pose::from_yaw(M_PI / 6);
  std::vector<Correspondence> rotated;
  for (const Point3& p : {Point3(1, 0, 0), Point3(0, 2, 0), Point3(-1, -1, 0.5)}) rotated.emplace_back(p, yaw30 * p);
  const Pose est = icp_p2p_step(rotated);
  CHECK((est.rotation() - yaw30.rotation()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(est.translation().norm() < 1e-12);

  // Mirror image of a planar triad across x = 0: the unconstrained SVD answer
  // is a reflection; the corrected one is a proper rotation mapping the triad.
  std::vector<Correspondence> mirrored;
  for (const Point3& p : {Point3(1, 0, 0), Point3(2, 1, 0), Point3(3, -1, 0)}) {
    mirrored.emplace_back(p, Point3(-p.x(), p.y(), p.z()));
  }
  const Pose fixed = icp_p2p_step(mirrored);
  CHECK(fixed.rotation().determinant() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(fixed.orthonormality_error() < 1e-12);
  for (const auto& [s, t] : mirrored) CHECK((fixed * s - t).norm() < 1e-9);

  std::vector<Correspondence> line{{{0, 0, 0}, {0, 0, 0}}, {{1, 0, 0}, {1, 0, 0}}, {{2, 0, 0}, {2, 0, 0}}};
  CHECK_THROWS_AS(icp_p2p_step(line), std::domain_error);
}

TEST_CASE("gicp objective vanishes on aligned clouds") {
  auto pairs = random_gicp_pairs(50, 5);
  for (auto& p : pairs) p.target = p.source;
  const auto e = gicp_objective(pairs, Pose::identity());
  CHECK(e.cost < 1e-20);
  CHECK(e.gradient.norm() < 1e-12);
}

TEST_CASE("gicp gradient matches central finite differences") {
  const auto pairs = random_gicp_pairs(50, 6);
  const Pose at = Pose(Eigen::AngleAxisd(0.2, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(0.1, -0.2, 0.05));
  const auto e = gicp_objective(pairs, at);
  const double h = 1e-6;
  double worst = 0.0;
  for (int k = 0; k < 6; ++k) {
    Vec6 d = Vec6::Zero();
    d(k) = h;
    const double fp = gicp_objective(pairs, se3_exp(d) * at).cost;
    const double fm = gicp_objective(pairs, se3_exp(-d) * at).cost;
    worst = std::max(worst, std::abs((fp - fm) / (2 * h) - e.gradient(k)));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gicp cost is anisotropic across a plane") {
  // Two parallel planes z=0; offsetting along the normal should cost far more
  // than sliding the same distance within the plane.
  std::vector<GicpCorrespondence> normal_offset, inplane_offset;
  const Mat3 plane_cov = regularize_plane_covariance(Vec3(1, 1, 0).asDiagonal());
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) {
      const Point3 p(i * 0.5, j * 0.5, 0.0);
      normal_offset.push_back({p, p + Vec3(0, 0, 0.1), plane_cov, plane_cov});
      inplane_offset.push_back({p, p + Vec3(0.1, 0, 0), plane_cov, plane_cov});
    }
  const double normal_cost = gicp_objective(normal_offset, Pose::identity()).cost;
  const double inplane_cost = gicp_objective(inplane_offset, Pose::identity()).cost;
  CHECK(normal_cost / inplane_cost > 100.0);
}

TEST_CASE("recovery from random motions for every backend") {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const PointCloud src = with_normals(structured_cloud(500, 100 + trial));
    const Pose truth = random_motion(rng, 1.0, 10.0 * M_PI / 180.0);
    const PointCloud tgt = with_normals(src.transformed(truth));
    for (auto m : kAllMethods) {
      const auto r = align(src, tgt, Pose::identity(), tight(m));
      CHECK(translation_error(r.transform, truth) < 1e-3);
      CHECK(deg(rotation_error(r.transform, truth)) < 0.05);
    }
  }
}

TEST_CASE("reverse alignment is the inverse") {
  const PointCloud a = with_normals(structured_cloud(500, 8));
  const Pose truth = Pose::from_yaw(0.1, {0.5, -0.3, 0.1});
  const PointCloud b = with_normals(a.transformed(truth));
  for (auto m : kAllMethods) {
    const auto ab = align(a, b, Pose::identity(), tight(m));
    const auto ba = align(b, a, Pose::identity(), tight(m));
    CHECK(translation_error(ab.transform, ba.transform.inverse()) < 1e-3);
  }
}

TEST_CASE("point-to-point objective never increases") {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    const PointCloud src = structured_cloud(500, 200 + trial);
    const PointCloud tgt = src.transformed(random_motion(rng, 1.0, 0.15));
    const auto r = align(src, tgt, Pose::identity(), tight(RegistrationMethod::IcpPointToPoint));
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1] + 1e-12);
    }
  }
}

TEST_CASE("correct alignment has a much smaller fitness than identity") {
  const PointCloud src = structured_cloud(800, 10);
  const Pose truth = Pose::from_yaw(0.15, {1.0, 0.5, 0.0});
  const PointCloud tgt = src.transformed(truth);
  const auto good = align(src, tgt, Pose::identity(), tight(RegistrationMethod::Gicp));
  const double at_identity = fitness_score(PreparedCloud(src), PreparedCloud(tgt), Pose::identity(), 2.0);
  CHECK(good.fitness * 10.0 < at_identity);
}

TEST_CASE("too few correspondences is a failed match") {
  PointCloud a = structured_cloud(200, 11);
  const PointCloud far = a.transformed(Pose::from_translation({100, 0, 0}));
  for (auto m : kAllMethods) {
    const auto r = align(with_normals(a), with_normals(far), Pose::identity(), tight(m));
    CHECK_FALSE(r.converged);
    CHECK(std::isinf(r.fitness));
  }
}

TEST_CASE("point-to-plane needs target normals") {
  const PointCloud a = structured_cloud(100, 12);
  CHECK_THROWS_AS(align(a, a, Pose::identity(), tight(RegistrationMethod::IcpPointToPlane)),
                  std::invalid_argument);
}

TEST_CASE("registration config validation") {
  RegistrationConfig cfg;
  cfg.max_iterations = 0;
  CHECK_THROWS(cfg.validate());
  cfg = RegistrationConfig{};
  cfg.transformation_epsilon = 0.0;
  CHECK_THROWS(cfg.validate());
}
