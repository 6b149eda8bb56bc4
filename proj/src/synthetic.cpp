#include "lgslam/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace lgslam::synthetic {

namespace {

using Vec2 = Eigen::Vector2d;

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + t * ab - p).norm();
}

double wall_path_distance(const Wall& w, const std::vector<Pose>& path) {
  double best = std::numeric_limits<double>::infinity();
  const int samples = std::max(2, static_cast<int>((w.b - w.a).norm() / 0.2) + 1);
  for (int s = 0; s < samples; ++s) {
    const Vec2 q = w.a + (w.b - w.a) * (static_cast<double>(s) / (samples - 1));
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      best = std::min(best, point_segment_distance(q, path[i].translation().head<2>(),
                                                   path[i + 1].translation().head<2>()));
    }
    if (path.size() == 1) best = std::min(best, (q - path[0].translation().head<2>()).norm());
  }
  return best;
}

Pose planar_pose(double x, double y, double yaw, double z) {
  Pose p = Pose::from_yaw(yaw);
  return {p.rotation(), Vec3(x, y, z)};
}

}  // namespace

PointCloud render_scan(const World& world, const Pose& sensor_pose, const LidarModel& lidar,
                       std::uint64_t noise_seed, const Pose& sweep_motion) {
  const Vec2 centre = sensor_pose.translation().head<2>();
  const double reach = lidar.max_range + (lidar.motion_skew ? sweep_motion.translation().norm() : 0);
  std::vector<const Wall*> near;
  for (const auto& w : world.walls) {
    if (point_segment_distance(centre, w.a, w.b) <= reach) near.push_back(&w);
  }
  const Vec6 sweep_twist = lidar.motion_skew ? se3_log(sweep_motion) : Vec6::Zero();

  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> noise(0.0, lidar.range_noise_sigma);

  PointCloud cloud;
  cloud.points.reserve(static_cast<std::size_t>(lidar.rings) * lidar.azimuth_steps / 2);
  const double el_lo = lidar.min_elevation_deg * M_PI / 180.0;
  const double el_hi = lidar.max_elevation_deg * M_PI / 180.0;
  for (int ring = 0; ring < lidar.rings; ++ring) {
    const double el =
        lidar.rings == 1 ? el_lo : el_lo + (el_hi - el_lo) * ring / (lidar.rings - 1);
    const double ce = std::cos(el), se = std::sin(el);
    for (int step = 0; step < lidar.azimuth_steps; ++step) {
      const double fraction = (step + 0.5) / lidar.azimuth_steps;
      const double az = -M_PI + 2.0 * M_PI * fraction;
      const Pose at = lidar.motion_skew ? sensor_pose * se3_exp((fraction - 0.5) * sweep_twist)
                                        : sensor_pose;
      const Vec3 origin = at.translation();
      const Vec2 o2 = origin.head<2>();
      const Vec3 dir_s(ce * std::cos(az), ce * std::sin(az), se);
      const Vec3 dir = at.rotation() * dir_s;

      double range = std::numeric_limits<double>::infinity();
      if (world.has_floor && dir.z() < -1e-9) range = -origin.z() / dir.z();
      const Vec2 d2 = dir.head<2>();
      if (d2.squaredNorm() > 1e-18) {
        for (const Wall* w : near) {
          const Vec2 e = w->b - w->a;
          const double denom = cross2(d2, e);
          if (std::abs(denom) < 1e-12) continue;
          const Vec2 ao = w->a - o2;
          const double t = cross2(ao, e) / denom;
          const double s = cross2(ao, d2) / denom;
          if (t <= 1e-9 || s < 0.0 || s > 1.0 || t >= range) continue;
          const double z = origin.z() + t * dir.z();
          if (z < 0.0 || z > w->height) continue;
          range = t;
        }
      }
      if (!(range <= lidar.max_range)) continue;

      double measured = range * (1.0 + lidar.range_gain_error);
      if (lidar.range_noise_sigma > 0) measured += noise(rng);
      const double maz = az * (1.0 + lidar.azimuth_gain_error);
      const double mel = el * (1.0 + lidar.elevation_gain_error);
      const double mce = std::cos(mel);
      cloud.points.emplace_back(measured * mce * std::cos(maz), measured * mce * std::sin(maz),
                                measured * std::sin(mel));
    }
  }
  return cloud;
}

std::vector<Pose> square_loop(double perimeter, double corner_radius, int count, double step,
                              double height) {
  const double arc = 0.5 * M_PI * corner_radius;
  const double side = (perimeter - 4.0 * arc) / 4.0;  // straight part of each side
  const double half = 0.5 * side + corner_radius;     // centre-to-side distance

  std::vector<Pose> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    double s = std::fmod(i * step, perimeter);
    // Start at the middle of the bottom side heading +x; each quarter is
    // half a straight, a corner arc, and another half straight.
    const double quarter = perimeter / 4.0;
    const int q = static_cast<int>(s / quarter);
    double u = s - q * quarter;
    double x, y, yaw;
    if (u < 0.5 * side) {
      x = u;
      y = -half;
      yaw = 0.0;
    } else if (u < 0.5 * side + arc) {
      const double a = (u - 0.5 * side) / corner_radius;
      x = 0.5 * side + corner_radius * std::sin(a);
      y = -half + corner_radius * (1.0 - std::cos(a));
      yaw = a;
    } else {
      x = half;
      y = -0.5 * side + (u - 0.5 * side - arc);
      yaw = 0.5 * M_PI;
    }
    // Rotate the quarter into place.
    const double rot = q * 0.5 * M_PI;
    const double c = std::cos(rot), sn = std::sin(rot);
    poses.push_back(planar_pose(c * x - sn * y, sn * x + c * y, yaw + rot, height));
  }
  return poses;
}

std::vector<Pose> straight_then_curve(double straight, double arc, int count, double step,
                                      double height) {
  const double radius = arc / (0.5 * M_PI);
  std::vector<Pose> poses;
  poses.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double s = i * step;
    if (s <= straight) {
      poses.push_back(planar_pose(s, 0.0, 0.0, height));
    } else {
      const double a = std::min((s - straight) / radius, 0.5 * M_PI);
      poses.push_back(planar_pose(straight + radius * std::sin(a),
                                  radius * (1.0 - std::cos(a)), a, height));
    }
  }
  return poses;
}

World world_along_path(const std::vector<Pose>& path, std::uint64_t seed,
                       const WorldOptions& opts) {
  World world;
  if (path.empty()) return world;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);

  double travelled = 0.0, next = 0.0;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) travelled += (path[i].translation() - path[i - 1].translation()).norm();
    if (travelled < next) continue;
    next += opts.wall_spacing;

    const Vec2 here = path[i].translation().head<2>();
    const Vec2 heading = (path[i].rotation() * Vec3::UnitX()).head<2>().normalized();
    const Vec2 left(-heading.y(), heading.x());
    for (double side : {1.0, -1.0}) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        const double lateral =
            opts.min_clearance + 1.0 + u01(rng) * (opts.max_lateral - opts.min_clearance - 1.0);
        const double along = (u01(rng) - 0.5) * opts.wall_spacing;
        const Vec2 centre = here + heading * along + left * (side * lateral);
        const double length = 3.0 + 7.0 * u01(rng);
        double angle = std::atan2(heading.y(), heading.x()) + (u01(rng) - 0.5) * 0.6;
        if (u01(rng) < 0.4) angle += 0.5 * M_PI;
        const Vec2 dir(std::cos(angle), std::sin(angle));
        Wall w{centre - 0.5 * length * dir, centre + 0.5 * length * dir,
               opts.min_height + u01(rng) * (opts.max_height - opts.min_height)};
        if (wall_path_distance(w, path) >= opts.min_clearance) {
          world.walls.push_back(w);
          break;
        }
      }
    }
    // An occasional pillar (four short walls) for extra yaw structure.
    if (u01(rng) < 0.5) {
      const double side = u01(rng) < 0.5 ? 1.0 : -1.0;
      const Vec2 c = here + left * side * (opts.min_clearance + 1.0 + 4.0 * u01(rng));
      const double r = 0.3 + 0.3 * u01(rng);
      const double h = opts.min_height + u01(rng) * (opts.max_height - opts.min_height);
      const Vec2 corners[4] = {c + Vec2(-r, -r), c + Vec2(r, -r), c + Vec2(r, r), c + Vec2(-r, r)};
      std::vector<Wall> box;
      for (int k = 0; k < 4; ++k) box.push_back({corners[k], corners[(k + 1) % 4], h});
      bool clear = true;
      for (const auto& w : box) clear = clear && wall_path_distance(w, path) >= opts.min_clearance;
      if (clear) world.walls.insert(world.walls.end(), box.begin(), box.end());
    }
  }
  if (opts.clutter_spacing > 0) {
    travelled = 0.0;
    next = 0.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
      if (i > 0) travelled += (path[i].translation() - path[i - 1].translation()).norm();
      while (travelled >= next) {
        next += opts.clutter_spacing;
        const Vec2 here = path[i].translation().head<2>();
        const Vec2 heading = (path[i].rotation() * Vec3::UnitX()).head<2>().normalized();
        const Vec2 left(-heading.y(), heading.x());
        const double side = u01(rng) < 0.5 ? 1.0 : -1.0;
        const double lateral = opts.min_clearance + 0.5 + u01(rng) * (opts.max_lateral + 10.0 - opts.min_clearance);
        const Vec2 c = here + heading * ((u01(rng) - 0.5) * 4.0) + left * (side * lateral);
        const double hx = 0.2 + 0.8 * u01(rng), hy = 0.2 + 0.8 * u01(rng);
        const double h = 0.8 + 3.2 * u01(rng);
        const double a = u01(rng) * M_PI;
        const Vec2 ux(std::cos(a), std::sin(a)), uy(-std::sin(a), std::cos(a));
        const Vec2 corners[4] = {c - hx * ux - hy * uy, c + hx * ux - hy * uy, c + hx * ux + hy * uy,
                                 c - hx * ux + hy * uy};
        std::vector<Wall> box;
        for (int k = 0; k < 4; ++k) box.push_back({corners[k], corners[(k + 1) % 4], h});
        bool clear = true;
        for (const auto& w : box) clear = clear && wall_path_distance(w, path) >= opts.min_clearance;
        if (clear) world.walls.insert(world.walls.end(), box.begin(), box.end());
      }
    }
  }
  return world;
}

Sequence make_sequence(const World& world, const std::vector<Pose>& path, const LidarModel& lidar,
                       double rate_hz, std::uint64_t seed, double t0) {
  Sequence seq;
  seq.world = world;
  seq.truth = path;
  seq.timestamps.reserve(path.size());
  seq.scans.reserve(path.size());
  for (std::size_t i = 0; i < path.size(); ++i) {
    const double t = t0 + static_cast<double>(i) / rate_hz;
    Pose sweep;
    if (path.size() > 1) {
      sweep = i > 0 ? path[i - 1].inverse() * path[i] : path[0].inverse() * path[1];
    }
    PointCloud scan = render_scan(world, path[i], lidar, seed + i, sweep);
    scan.timestamp = t;
    scan.frame_id = "lidar";
    seq.timestamps.push_back(t);
    seq.scans.push_back(std::move(scan));
  }
  return seq;
}

std::vector<Pose> relative_to_first(const std::vector<Pose>& poses) {
  std::vector<Pose> out;
  out.reserve(poses.size());
  if (poses.empty()) return out;
  const Pose origin_inv = poses.front().inverse();
  for (const auto& p : poses) out.push_back(origin_inv * p);
  return out;
}

Sequence loop_ring_sequence(std::uint64_t seed, const LidarModel& lidar) {
  const auto path = square_loop(200.0, 8.0, 200, 1.03);
  return make_sequence(world_along_path(path, seed), path, lidar, 10.0, seed);
}

Sequence no_loop_sequence(std::uint64_t seed, const LidarModel& lidar) {
  const auto path = straight_then_curve(100.0, 50.0, 150, 1.0);
  return make_sequence(world_along_path(path, seed), path, lidar, 10.0, seed);
}

LidarModel drifting_lidar() {
  LidarModel lidar;
  lidar.azimuth_gain_error = 0.03;
  return lidar;
}

}  // namespace lgslam::synthetic
