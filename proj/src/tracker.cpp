#include "lgslam/tracker.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace lgslam {

void KeyframeCriteria::validate() const {
  if (!(delta_trans > 0 && delta_angle > 0 && delta_time > 0)) {
    throw std::invalid_argument("keyframe criteria must be positive");
  }
}

void TrackerConfig::validate() const {
  criteria.validate();
  registration.validate();
}

bool is_new_keyframe(const Pose& relative, double dt, const KeyframeCriteria& crit) {
  return relative.translation().norm() >= crit.delta_trans ||
         relative.rotation_angle() >= crit.delta_angle || dt >= crit.delta_time;
}

Tracker::Tracker(TrackerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::shared_ptr<const Keyframe> Tracker::make_keyframe(std::shared_ptr<const PreparedCloud> cloud,
                                                       const Pose& relative, double timestamp) {
  auto kf = std::make_shared<Keyframe>();
  kf->cloud = std::move(cloud);
  kf->timestamp = timestamp;
  kf->relative_to_previous = relative;
  if (keyframe_) {
    kf->pose = (keyframe_->pose * relative).orthonormalized();
    kf->accumulated_distance = keyframe_->accumulated_distance + relative.translation().norm();
    kf->index = keyframe_->index + 1;
  }
  ++keyframe_count_;
  return kf;
}

bool Tracker::maybe_skip(const Pose& precomputed_relative, double dt) {
  if (!keyframe_ || is_new_keyframe(precomputed_relative, dt, cfg_.criteria)) return false;
  last_motion_ = last_relative_.inverse() * precomputed_relative;
  last_relative_ = precomputed_relative;
  return true;
}

TrackResult Tracker::track(std::shared_ptr<const PointCloud> filtered,
                           const std::optional<Pose>& motion_guess,
                           const std::optional<Pose>& external_odometry) {
  TrackResult out;
  out.timestamp = filtered->timestamp;

  if (!keyframe_) {
    keyframe_ = make_keyframe(std::make_shared<const PreparedCloud>(std::move(filtered)),
                              Pose::identity(), out.timestamp);
    keyframe_odometry_ = external_odometry;
    last_relative_ = Pose::identity();
    out.new_keyframe = keyframe_;
    return out;
  }

  const double dt = out.timestamp - keyframe_->timestamp;
  out.keyframe_index = keyframe_->index;

  Pose guess = last_relative_ * last_motion_;
  if (external_odometry && keyframe_odometry_) {
    const Pose precomputed = keyframe_odometry_->inverse() * *external_odometry;
    if (maybe_skip(precomputed, dt)) {
      out.relative_to_keyframe = precomputed;
      out.pose = keyframe_->pose * precomputed;
      out.skipped = true;
      return out;
    }
    guess = precomputed;
  } else if (motion_guess) {
    guess = last_relative_ * *motion_guess;
  }

  ++registration_calls_;
  auto source = std::make_shared<const PreparedCloud>(std::move(filtered));
  const auto result = align(*source, *keyframe_->cloud, guess, cfg_.registration);
  out.fitness = result.fitness;

  if (!result.converged || !std::isfinite(result.fitness)) {
    spdlog::warn("tracker: registration failed at t={:.3f}, extrapolating", out.timestamp);
    const Pose extrapolated = last_relative_ * last_motion_;
    out.relative_to_keyframe = extrapolated;
    out.pose = keyframe_->pose * extrapolated;
    out.degraded = true;
    last_relative_ = extrapolated;
    return out;
  }

  const Pose relative = result.transform;
  last_motion_ = last_relative_.inverse() * relative;
  out.relative_to_keyframe = relative;
  out.pose = keyframe_->pose * relative;

  if (is_new_keyframe(relative, dt, cfg_.criteria)) {
    keyframe_ = make_keyframe(std::move(source), relative, out.timestamp);
    keyframe_odometry_ = external_odometry;
    out.pose = keyframe_->pose;
    out.new_keyframe = keyframe_;
    last_relative_ = Pose::identity();
  } else {
    last_relative_ = relative;
  }
  return out;
}

}  // namespace lgslam
