// Acceptance suite: one PASS/FAIL/SKIP line per criterion, exit 1 on any FAIL.

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <string>

#include "lgslam/dataset.hpp"
#include "lgslam/evaluation.hpp"
#include "lgslam/floor_detector.hpp"
#include "lgslam/loop_detector.hpp"
#include "lgslam/normals.hpp"
#include "lgslam/pipeline.hpp"
#include "lgslam/pose_graph.hpp"
#include "lgslam/prefilter.hpp"
#include "lgslam/scan_context.hpp"
#include "test_support.hpp"

using namespace lgslam;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome check(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string describe(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double deg(double rad) { return rad * 180.0 / M_PI; }

std::vector<TimedPose> timed_truth(const synthetic::Sequence& seq) {
  const auto rel = synthetic::relative_to_first(seq.truth);
  std::vector<TimedPose> out;
  for (std::size_t i = 0; i < rel.size(); ++i) out.push_back({seq.timestamps[i], rel[i]});
  return out;
}

AteReport ate(const std::vector<TimedPose>& est, const std::vector<TimedPose>& truth, bool align) {
  return compute_ate(associate(est, truth, 0.05), est, truth, align);
}

double path_length(const std::vector<Pose>& poses) {
  double len = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) len += (poses[i].translation() - poses[i - 1].translation()).norm();
  return len;
}

std::shared_ptr<const Keyframe> place_keyframe(const PointCloud& raw, int index, double distance,
                                               const Pose& pose = {}) {
  auto kf = std::make_shared<Keyframe>();
  kf->cloud = std::make_shared<const PreparedCloud>(prefilter(raw, PrefiltererConfig{}));
  kf->scan_context = std::make_shared<const ScanContext>(make_scan_context(kf->cloud->cloud()));
  kf->index = index;
  kf->accumulated_distance = distance;
  kf->pose = pose;
  return kf;
}

Outcome loop_ring() {
  const auto seq = synthetic::loop_ring_sequence(1, synthetic::drifting_lidar());
  const MemorySource source(seq.scans, seq.timestamps);
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_pipeline(SlamConfig{}, source);
  const double secs = seconds_since(t0);
  const auto truth = timed_truth(seq);
  const double opt = ate(result.trajectory, truth, true).rmse;
  const double odo = ate(result.odometry, truth, true).rmse;
  return check(!result.loops.empty() && opt < 0.5 && odo > 2.0 && secs < 60.0,
               describe("loops %zu, optimized ATE %.3f m, tracker-only ATE %.3f m, %.1f s",
                   result.loops.size(), opt, odo, secs));
}

Outcome no_loop() {
  const auto seq = synthetic::no_loop_sequence(1, synthetic::LidarModel{});
  const MemorySource source(seq.scans, seq.timestamps);
  const auto result = run_pipeline(SlamConfig{}, source);
  const double odo = ate(result.odometry, timed_truth(seq), false).rmse;
  const double bound = 0.01 * path_length(seq.truth);
  return check(result.loops.empty() && odo < bound,
               describe("loops %zu, tracker ATE %.3f m (bound %.2f m)", result.loops.size(), odo, bound));
}

Outcome registration_recovery() {
  std::mt19937 rng(2024);
  const RegistrationMethod methods[] = {RegistrationMethod::IcpPointToPoint,
                                        RegistrationMethod::IcpPointToPlane, RegistrationMethod::Gicp};
  double worst_t[3] = {0, 0, 0}, worst_r[3] = {0, 0, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const PointCloud src = estimate_normals(testing::structured_cloud(500, 1000 + trial), 10);
    const Pose truth = testing::random_motion(rng, 1.0, 10.0 * M_PI / 180.0);
    const PointCloud tgt = estimate_normals(src.transformed(truth), 10);
    for (int m = 0; m < 3; ++m) {
      RegistrationConfig cfg;
      cfg.method = methods[m];
      cfg.transformation_epsilon = 1e-8;
      cfg.max_iterations = 100;
      const auto r = align(src, tgt, Pose::identity(), cfg);
      worst_t[m] = std::max(worst_t[m], translation_error(r.transform, truth));
      worst_r[m] = std::max(worst_r[m], deg(rotation_error(r.transform, truth)));
    }
  }

  const auto pairs = testing::random_gicp_pairs(50, 6);
  const Pose at(Eigen::AngleAxisd(0.2, Vec3(1, 2, 3).normalized()).toRotationMatrix(), Vec3(0.1, -0.2, 0.05));
  const auto e = gicp_objective(pairs, at);
  double grad_err = 0.0;
  for (int k = 0; k < 6; ++k) {
    Vec6 d = Vec6::Zero();
    d(k) = 1e-6;
    const double fd = (gicp_objective(pairs, se3_exp(d) * at).cost -
                       gicp_objective(pairs, se3_exp(-d) * at).cost) / 2e-6;
    grad_err = std::max(grad_err, std::abs(fd - e.gradient(k)));
  }

  bool ok = grad_err < 1e-5;
  for (int m = 0; m < 3; ++m) ok = ok && worst_t[m] < 1e-3 && worst_r[m] < 0.05;
  return check(ok, describe("worst p2p %.1e m/%.1e deg, p2plane %.1e m/%.1e deg, gicp %.1e m/%.1e deg, "
                       "gradient error %.1e",
                       worst_t[0], worst_r[0], worst_t[1], worst_r[1], worst_t[2], worst_r[2], grad_err));
}

Outcome graph_ring() {
  const auto truth = testing::ring_truth();
  PoseGraph g;
  g.add_keyframe_node(truth[0]);
  Pose chain = truth[0];
  for (int i = 1; i < 20; ++i) {
    const Pose rel = truth[i - 1].inverse() * truth[i];
    const Pose drifted(rel.rotation(), rel.translation() * 1.01);
    chain = chain * drifted;
    g.add_keyframe_node(chain);
    g.add_pose_edge(EdgeKind::Odometry, i - 1, i, drifted, testing::odometry_info());
  }
  g.add_pose_edge(EdgeKind::Loop, 19, 0, truth[19].inverse() * truth[0], testing::odometry_info() * 10,
                  RobustKernel::Huber, 1.0);
  const double before = translation_error(g.node(19).pose, truth[19]);
  const Mat4 fixed_before = g.node(0).pose.matrix();
  const auto report = g.optimize();
  const double after = translation_error(g.node(19).pose, truth[19]);
  bool monotone = true;
  double prev = report.initial_chi2;
  for (double c : report.chi2_trace) {
    monotone = monotone && c <= prev;
    prev = c;
  }
  const bool fixed = g.node(0).pose.matrix() == fixed_before;
  const double reduction = 1.0 - after / before;
  return check(reduction >= 0.9 && monotone && fixed,
               describe("endpoint error %.3f -> %.4f m (%.1f%% reduction), %zu LM steps, chi2 %s, fixed node %s",
                   before, after, 100.0 * reduction, report.chi2_trace.size(),
                   monotone ? "non-increasing" : "INCREASED", fixed ? "unchanged" : "MOVED"));
}

Outcome floor_detection() {
  int ok = 0;
  for (unsigned seed = 0; seed < 100; ++seed) {
    const auto f = detect_floor_planar(testing::floor_and_wall(seed), FloorConfig{});
    ok += f.valid && testing::normal_angle_deg(f.normal(), Vec3::UnitZ()) < 0.5 &&
          std::abs(f.plane[3] - 1.7) < 0.02;
  }
  double worst_rough = 0.0;
  bool rough_valid = true;
  for (unsigned seed = 0; seed < 20; ++seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    std::normal_distribution<double> noise(0.0, 0.05);
    PointCloud c;
    while (c.size() < 500) {
      const double x = u(rng), y = u(rng);
      if (std::hypot(x, y) <= 2.0) c.points.emplace_back(x, y, -1.7 + noise(rng));
    }
    const auto f = detect_floor_rough(c, FloorConfig{});
    rough_valid = rough_valid && f.valid;
    worst_rough = std::max(worst_rough, testing::normal_angle_deg(f.normal(), Vec3::UnitZ()));
  }
  return check(ok >= 99 && rough_valid && worst_rough < 2.0,
               describe("planar %d/100 within 0.5 deg / 0.02 m, rough worst %.2f deg over 20 noisy clouds", ok,
                   worst_rough));
}

Outcome scan_context() {
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> u(-70.0, 70.0), h(-2.5, 5.0);
  PointCloud c;
  for (int i = 0; i < 20000; ++i) c.points.emplace_back(u(rng), u(rng), h(rng));
  const auto base = make_scan_context(c);
  int shifts_ok = 0;
  for (int shift = 1; shift < 60; ++shift) {
    const auto rotated = make_scan_context(c.transformed(Pose::from_yaw(shift * 2 * M_PI / 60)));
    bool equal = true;
    for (int j = 0; j < 60; ++j) equal = equal && rotated.grid.col((j + shift) % 60) == base.grid.col(j);
    shifts_ok += equal;
  }

  std::vector<synthetic::World> worlds;
  std::vector<LoopEntry> all;
  for (int p = 0; p < 5; ++p) {
    worlds.push_back(testing::place_world(200 + p));
    all.push_back({place_keyframe(testing::place_scan(worlds.back(), {}), p, 0), {}});
  }
  std::mt19937 trial_rng(11);
  std::uniform_real_distribution<double> yaw(-M_PI, M_PI), off(-1.0, 1.0);
  int ranked_first = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int p = trial % 5;
    const Pose revisit = Pose::from_yaw(yaw(trial_rng), Vec3(off(trial_rng), off(trial_rng), 0));
    const LoopEntry query{place_keyframe(testing::place_scan(worlds[p], revisit, trial + 1), 5, 100), {}};
    const auto ranked = rank_candidates(query, all, {0, 1, 2, 3, 4}, LoopConfig{});
    ranked_first += !ranked.empty() && static_cast<int>(ranked[0].candidate_index) == p;
  }

  LoopConfig cfg;
  cfg.min_accumulated_distance = 1.0;
  LoopDetector detector(cfg);
  const auto world = testing::place_world(800);
  std::vector<Pose> poses;
  for (int i = 0; i < 12; ++i) {
    const Pose pose = Pose::from_translation(Vec3(0.3 * i, 0, 0));
    poses.push_back(pose);
    detector.process(place_keyframe(testing::place_scan(world, pose), i, 2.0 * i, pose), poses);
  }
  const std::size_t max_calls = detector.max_verifications_per_query();

  return check(shifts_ok == 59 && ranked_first == 100 && max_calls <= static_cast<std::size_t>(cfg.top_k),
               describe("column shift exact for %d/59 shifts, true revisit first in %d/100, max %zu "
                   "registrations per query (k = %d)",
                   shifts_ok, ranked_first, max_calls, cfg.top_k));
}

Outcome filter_equivalence() {
  int equal = 0;
  std::size_t kept = 0, total = 0;
  for (unsigned seed = 0; seed < 10; ++seed) {
    const PointCloud c = testing::random_cube(100000, 30.0, 500 + seed);
    const PointCloud par = remove_outliers(c, 0.4, 2);
    equal += par.points == remove_outliers_sequential(c, 0.4, 2).points;
    kept += par.size();
    total += c.size();
  }
  bool idempotent = true;
  for (unsigned seed = 0; seed < 3; ++seed) {
    const PointCloud once = downsample(testing::random_cube(100000, 8.0, 600 + seed), 0.25);
    const PointCloud twice = downsample(once, 0.25);
    idempotent = idempotent && twice.size() == once.size();
    for (std::size_t i = 0; idempotent && i < once.size(); ++i) {
      idempotent = voxel_of(twice.points[i], 0.25) == voxel_of(once.points[i], 0.25) &&
                   (twice.points[i] - once.points[i]).norm() < 1e-12;
    }
  }
  return check(equal == 10 && idempotent,
               describe("partitioned == sequential on %d/10 clouds (%.1f%% kept), downsample idempotent: %s",
                   equal, 100.0 * kept / total, idempotent ? "yes" : "no"));
}

std::vector<TimedPose> line_trajectory(int n) {
  std::vector<TimedPose> out;
  for (int i = 0; i < n; ++i) out.push_back({0.1 * i, Pose::from_yaw(0.05 * i, Vec3(i, 0.2 * i * i, 0.1 * i))});
  return out;
}

Outcome evaluation_math() {
  std::mt19937 rng(17);
  std::normal_distribution<double> g(0.0, 0.3);
  double worst_identity = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto truth = line_trajectory(30);
    auto est = truth;
    const Pose offset = testing::random_motion(rng, 3.0, 0.5);
    for (auto& p : est) p.pose = offset * Pose::from_translation(Vec3(g(rng), g(rng), g(rng))) * p.pose;
    for (bool align : {false, true}) {
      const auto r = ate(est, truth, align);
      worst_identity = std::max(worst_identity, std::abs(r.std * r.std + r.mean * r.mean - r.rmse * r.rmse));
    }
  }
  const auto truth = line_trajectory(10);
  auto est = truth;
  for (auto& p : est) p.pose = Pose::from_translation(Vec3(1, 0, 0)) * p.pose;
  const auto raw = ate(est, truth, false);
  const auto aligned = ate(est, truth, true);
  const bool offset_ok = std::abs(raw.mean - 1.0) < 1e-12 && std::abs(raw.rmse - 1.0) < 1e-12 &&
                         aligned.rmse < 1e-9;
  return check(worst_identity < 1e-12 && offset_ok,
               describe("worst |std^2+mean^2-rmse^2| %.1e, 1 m offset: raw mean %.15f, aligned rmse %.1e",
                   worst_identity, raw.mean, aligned.rmse));
}

Outcome kitti_07() {
  const char* env = std::getenv("LGSLAM_KITTI_SEQ07");
  const fs::path dir = env ? fs::path(env) : fs::path("/data/kitti/sequences/07");
  if (!fs::exists(dir / "velodyne")) {
    return {Verdict::Skip, "KITTI sequence 07 not found at " + dir.string() + " (set LGSLAM_KITTI_SEQ07)"};
  }
  const KittiSource source(open_kitti_sequence(dir));
  if (!source.sequence().ground_truth) return {Verdict::Skip, "sequence 07 has no ground truth poses"};
  const auto t0 = std::chrono::steady_clock::now();
  const auto result = run_pipeline(SlamConfig{}, source);
  const double secs = seconds_since(t0);
  const auto& ts = source.sequence().timestamps;
  const double duration = ts.back() - ts.front();
  const double rmse = ate(result.trajectory, *source.sequence().ground_truth, true).rmse;
  return check(rmse <= 1.5 && secs <= 3.0 * duration,
               describe("ATE %.3f m, %.0f s for a %.0f s sequence, %zu loops", rmse, secs, duration,
                   result.loops.size()));
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"synthetic loop ring", loop_ring},
      {"no-loop robustness", no_loop},
      {"registration recovery", registration_recovery},
      {"pose-graph ring", graph_ring},
      {"floor detection", floor_detection},
      {"scan context properties", scan_context},
      {"filter equivalence", filter_equivalence},
      {"evaluation math", evaluation_math},
      {"KITTI 07", kitti_07},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::Fail;
    std::printf("criterion %zu %-24s %s  %s  [%.1f s]\n", i + 1, criteria[i].first, tag, o.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
