#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <random>

#include "doctest.h"
#include "lgslam/config.hpp"
#include "lgslam/dataset.hpp"
#include "lgslam/evaluation.hpp"
#include "test_support.hpp"

using namespace lgslam;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("lgslam_io_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_bytes(const fs::path& p, const std::vector<char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<TimedPose> line_trajectory(int n, double dt, double t0 = 0.0) {
  std::vector<TimedPose> out;
  for (int i = 0; i < n; ++i) {
    out.push_back({t0 + i * dt, Pose::from_yaw(0.05 * i, Vec3(i, 0.2 * i * i, 0.1 * i))});
  }
  return out;
}

// GCC 11 at -O3 folds an in-register double->float->double round trip away.
double float_rounded(double v) {
  volatile float f = static_cast<float>(v);
  return f;
}

}  // namespace

TEST_CASE("one KITTI point round-trips through 16 bytes") {
  TempDir dir;
  const float values[4] = {1.0f, 2.0f, 3.0f, 0.5f};
  std::vector<char> bytes(16);
  std::memcpy(bytes.data(), values, 16);
  write_bytes(dir.path / "a.bin", bytes);
  const auto c = load_kitti_scan(dir.path / "a.bin");
  REQUIRE(c.size() == 1);
  CHECK((c.points[0] - Vec3(1, 2, 3)).norm() == 0.0);
}

TEST_CASE("empty scan file is an empty cloud") {
  TempDir dir;
  write_bytes(dir.path / "e.bin", {});
  CHECK(load_kitti_scan(dir.path / "e.bin").empty());
}

TEST_CASE("scan size not divisible by 16 is a format error") {
  TempDir dir;
  write_bytes(dir.path / "b.bin", std::vector<char>(17, 0));
  CHECK_THROWS_AS(load_kitti_scan(dir.path / "b.bin"), FormatError);
}

TEST_CASE("non-finite points are dropped") {
  TempDir dir;
  const float values[8] = {1, 2, 3, 0, NAN, 0, 0, 0};
  std::vector<char> bytes(32);
  std::memcpy(bytes.data(), values, 32);
  write_bytes(dir.path / "n.bin", bytes);
  CHECK(load_kitti_scan(dir.path / "n.bin").size() == 1);
}

TEST_CASE("random clouds survive KITTI and PLY round trips at float precision") {
  TempDir dir;
  const PointCloud c = testing::structured_cloud(5000, 3);
  write_kitti_scan(dir.path / "r.bin", c);
  write_ply(dir.path / "r.ply", c);
  const auto from_bin = load_kitti_scan(dir.path / "r.bin");
  const auto from_ply = read_ply(dir.path / "r.ply");
  REQUIRE(from_bin.size() == c.size());
  REQUIRE(from_ply.size() == c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto& p = c.points[i];
    const Vec3 f(float_rounded(p.x()), float_rounded(p.y()), float_rounded(p.z()));
    CHECK((from_bin.points[i] - f).norm() == 0.0);
    CHECK((from_ply.points[i] - f).norm() == 0.0);
  }
}

TEST_CASE("TUM trajectories round-trip") {
  TempDir dir;
  const auto traj = line_trajectory(20, 0.1, 1000.0);
  write_tum(dir.path / "t.txt", traj);
  const auto back = read_tum(dir.path / "t.txt");
  REQUIRE(back.size() == traj.size());
  for (std::size_t i = 0; i < traj.size(); ++i) {
    CHECK(back[i].timestamp == doctest::Approx(traj[i].timestamp).epsilon(1e-12));
    CHECK(translation_error(back[i].pose, traj[i].pose) < 1e-9);
    CHECK(rotation_error(back[i].pose, traj[i].pose) < 1e-9);
  }
}

TEST_CASE("sequence directory with poses and calibration") {
  TempDir dir;
  std::vector<PointCloud> scans(3, testing::structured_cloud(100, 1));
  const std::vector<double> times{0.0, 0.1, 0.2};
  const std::vector<Pose> velo{Pose::identity(), Pose::from_translation(Vec3(1, 0, 0)),
                               Pose::from_yaw(0.1, Vec3(2, 0.1, 0))};
  // Camera-frame poses as KITTI stores them.
  const Pose tr = Pose::from_quaternion(Eigen::Quaterniond(0.5, -0.5, 0.5, -0.5), Vec3(0.1, -0.2, 0.3));
  std::vector<Pose> cam;
  for (const auto& p : velo) cam.push_back(tr * p * tr.inverse());
  write_kitti_sequence(dir.path, scans, times, cam);
  {
    std::ofstream calib(dir.path / "calib.txt");
    const Mat4 m = tr.matrix();
    calib << "P0: 1 0 0 0 0 1 0 0 0 0 1 0\nTr:";
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c) calib << ' ' << std::setprecision(17) << m(r, c);
    calib << '\n';
  }
  const auto seq = open_kitti_sequence(dir.path);
  CHECK(seq.scan_paths.size() == 3);
  CHECK(seq.ground_truth_source == "poses.txt+calib");
  REQUIRE(seq.ground_truth);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(translation_error((*seq.ground_truth)[i].pose, velo[i]) < 1e-9);
  }
}

TEST_CASE("missing velodyne directory is a descriptive error") {
  TempDir dir;
  CHECK_THROWS_WITH_AS(open_kitti_sequence(dir.path), doctest::Contains("velodyne"),
                       std::runtime_error);
}

TEST_CASE("oxts fixes project onto a local tangent plane") {
  std::vector<OxtsFix> fixes(2);
  fixes[0].lat = 49.0;
  fixes[0].lon = 8.4;
  fixes[1] = fixes[0];
  fixes[1].lat += 100.0 / 111200.0;  // about 100 m north
  const auto poses = oxts_to_poses(fixes);
  CHECK(poses[0] == Pose::identity());
  CHECK(poses[1].translation().y() == doctest::Approx(100.0).epsilon(0.01));
  CHECK(std::abs(poses[1].translation().x()) < 1e-6);
}

TEST_CASE("association") {
  const auto truth = line_trajectory(10, 0.1);
  SUBCASE("identical timestamps pair by index") {
    const auto pairs = associate(truth, truth, 0.05);
    REQUIRE(pairs.size() == 10);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      CHECK(pairs[i].estimate == i);
      CHECK(pairs[i].truth == i);
    }
  }
  SUBCASE("a constant 0.05 s offset still pairs everything") {
    auto est = truth;
    for (auto& p : est) p.timestamp += 0.05;
    CHECK(associate(est, truth, 0.1).size() == 10);
  }
  SUBCASE("disjoint time ranges are an error") {
    CHECK_THROWS_AS(associate(line_trajectory(5, 0.1, 100.0), truth, 0.1), EvaluationError);
  }
  SUBCASE("each truth pose is used at most once") {
    std::vector<TimedPose> est{{0.30, {}}, {0.31, {}}};
    const auto pairs = associate(est, truth, 0.1);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].truth != pairs[1].truth);
  }
}

TEST_CASE("ATE of identical trajectories is zero") {
  const auto t = line_trajectory(10, 0.1);
  const auto r = compute_ate(associate(t, t, 0.01), t, t, true);
  CHECK(r.mean < 1e-12);
  CHECK(r.rmse < 1e-12);
  CHECK(r.std < 1e-12);
}

TEST_CASE("constant offset: exact without alignment, removed with it") {
  const auto truth = line_trajectory(10, 0.1);
  auto est = truth;
  for (auto& p : est) p.pose = Pose::from_translation(Vec3(1, 0, 0)) * p.pose;
  const auto pairs = associate(est, truth, 0.01);
  const auto raw = compute_ate(pairs, est, truth, false);
  CHECK(raw.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(raw.rmse == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(raw.std < 1e-6);
  const auto aligned = compute_ate(pairs, est, truth, true);
  CHECK(aligned.mean < 1e-9);
}

TEST_CASE("ATE identities and alignment optimality on random errors") {
  std::mt19937 rng(17);
  std::normal_distribution<double> g(0.0, 0.3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = line_trajectory(30, 0.1);
    auto est = truth;
    const Pose offset = testing::random_motion(rng, 3.0, 0.5);
    for (auto& p : est) p.pose = offset * Pose::from_translation(Vec3(g(rng), g(rng), g(rng))) * p.pose;
    const auto pairs = associate(est, truth, 0.01);
    const auto raw = compute_ate(pairs, est, truth, false);
    const auto aligned = compute_ate(pairs, est, truth, true);
    for (const auto* r : {&raw, &aligned}) {
      CHECK(std::abs(r->std * r->std + r->mean * r->mean - r->rmse * r->rmse) < 1e-12);
    }
    CHECK(aligned.rmse <= raw.rmse);
  }
}

TEST_CASE("rigid fit recovers a known transform") {
  std::mt19937 rng(5);
  const Pose truth = testing::random_motion(rng, 10.0, 2.0);
  std::vector<Vec3> from, to;
  for (const auto& p : testing::structured_cloud(50, 2).points) {
    from.push_back(p);
    to.push_back(truth * p);
  }
  const Pose fit = fit_rigid(from, to);
  CHECK(translation_error(fit, truth) < 1e-9);
  CHECK(rotation_error(fit, truth) < 1e-9);
}

TEST_CASE("config parsing") {
  const auto cfg = parse_config(
      "# comment\n"
      "downsample_resolution = 0.5\n"
      "registration_method = ICP_P2PLANE  # trailing\n"
      "\n"
      "keyframe_delta_trans=4\n"
      "floor_mode = ROUGH\n"
      "loop_top_k = 7\n");
  CHECK(cfg.prefilter.downsample_resolution == 0.5);
  CHECK(cfg.tracker.registration.method == RegistrationMethod::IcpPointToPlane);
  CHECK(cfg.loop.registration.method == RegistrationMethod::IcpPointToPlane);
  CHECK(cfg.tracker.criteria.delta_trans == 4.0);
  CHECK(cfg.floor_mode == FloorModeSetting::Rough);
  CHECK(cfg.loop.top_k == 7);
  CHECK(cfg.loop.search_radius == 40.0);
}

TEST_CASE("config errors name the line") {
  CHECK_THROWS_WITH_AS(parse_config("bogus_key = 1\n", "a.cfg"), doctest::Contains("a.cfg:1"),
                       ConfigError);
  CHECK_THROWS_AS(parse_config("radius = 1\nradius = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius =\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius = abc\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("radius = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("registration_method = NDT\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/slam.cfg"), std::exception);
}

TEST_CASE("formatted config parses back to the same text") {
  SlamConfig cfg;
  cfg.prefilter.radius = 0.55;
  cfg.graph.incline_threshold_deg = 7.5;
  cfg.floor_mode = FloorModeSetting::None;
  const std::string text = format_config(cfg);
  CHECK(format_config(parse_config(text)) == text);
  CHECK(parse_config(text).prefilter.radius == 0.55);
}
