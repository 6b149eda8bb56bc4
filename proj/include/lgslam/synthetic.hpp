#pragma once

#include <cstdint>
#include <vector>

#include "lgslam/point_cloud.hpp"

// Ray-cast LiDAR simulation over a world of vertical walls standing on a flat
// floor (z = 0). Used by the test suites, the acceptance runner and
// `slam synth`.

namespace lgslam::synthetic {

struct Wall {
  Eigen::Vector2d a, b;  ///< footprint endpoints on the floor
  double height = 5.0;
};

struct World {
  std::vector<Wall> walls;
  bool has_floor = true;
};

struct LidarModel {
  int rings = 32;
  double min_elevation_deg = -25.0;
  double max_elevation_deg = 15.0;
  int azimuth_steps = 720;
  double max_range = 60.0;
  double range_noise_sigma = 0.0;
  /// Systematic calibration errors: measured range = r (1 + range_gain_error),
  /// azimuth = phi (1 + azimuth_gain_error) for phi in (-pi, pi], elevation =
  /// e (1 + elevation_gain_error).
  double range_gain_error = 0.0;
  double azimuth_gain_error = 0.0;
  double elevation_gain_error = 0.0;
  /// When true, each beam is cast from the pose at its firing time within the
  /// sweep (uncompensated motion skew); the scan pose is the mid-sweep pose.
  bool motion_skew = false;
};

/// Scan of `world` from a sensor at `sensor_pose` (sensor -> world), in the
/// sensor frame.
/// `sweep_motion` is the sensor motion over one full sweep (start -> end,
/// sensor frame); used only with motion_skew.
PointCloud render_scan(const World& world, const Pose& sensor_pose, const LidarModel& lidar,
                       std::uint64_t noise_seed, const Pose& sweep_motion = Pose::identity());

/// Evenly spaced poses (spacing `step` m) along a rounded square loop of the
/// given perimeter, starting mid-side heading +x, sensor at `height`.
std::vector<Pose> square_loop(double perimeter, double corner_radius, int count, double step,
                              double height = 1.7);

/// `straight` metres along +x, then a 90 degree left arc of length `arc`.
std::vector<Pose> straight_then_curve(double straight, double arc, int count, double step,
                                      double height = 1.7);

struct WorldOptions {
  double wall_spacing = 7.0;      ///< along-path spacing of wall pairs
  double min_clearance = 4.0;     ///< no wall closer than this to the path
  double max_lateral = 16.0;
  double min_height = 3.0;
  double max_height = 10.0;
  /// Path length per clutter object (small boxes: cars, kiosks, bushes);
  /// zero disables clutter.
  double clutter_spacing = 1.5;
};

/// Random walls on both sides of a path, never within min_clearance of it.
World world_along_path(const std::vector<Pose>& path, std::uint64_t seed,
                       const WorldOptions& opts = {});

struct Sequence {
  World world;
  std::vector<Pose> truth;  ///< sensor poses, world frame
  std::vector<double> timestamps;
  std::vector<PointCloud> scans;
};

/// Renders one scan per pose at `rate_hz`, timestamps starting at t0.
Sequence make_sequence(const World& world, const std::vector<Pose>& path,
                       const LidarModel& lidar, double rate_hz, std::uint64_t seed,
                       double t0 = 0.0);

/// Sensor poses relative to the first one, the frame the pipeline reports in.
std::vector<Pose> relative_to_first(const std::vector<Pose>& poses);

/// 200 scans at 1.03 m spacing around a 200 m rounded square, so the last
/// few scans overlap the start.
Sequence loop_ring_sequence(std::uint64_t seed, const LidarModel& lidar);

/// 150 scans at 1 m spacing: 100 m straight, then a 50 m quarter arc.
Sequence no_loop_sequence(std::uint64_t seed, const LidarModel& lidar);

/// The 32-ring model with a 3% azimuth encoder gain error, which makes
/// scan-matching odometry drift by several metres over the loop ring.
LidarModel drifting_lidar();

}  // namespace lgslam::synthetic
