#pragma once

#include <cstddef>
#include <memory>
#include <optional>

#include "lgslam/registration.hpp"
#include "lgslam/scan_context.hpp"

namespace lgslam {

struct KeyframeCriteria {
  double delta_trans = 5.0;   // m
  double delta_angle = 0.25;  // rad
  double delta_time = 1.0;    // s

  void validate() const;
};

struct Keyframe {
  std::shared_ptr<const PreparedCloud> cloud;  ///< filtered cloud, sensor frame
  Pose pose;                                   ///< tracker (odometry) pose, world frame
  double timestamp = 0.0;
  double accumulated_distance = 0.0;
  int index = 0;
  /// Pose relative to the previous keyframe (identity for keyframe 0).
  Pose relative_to_previous;
  /// Filled in when the keyframe is inserted into the graph.
  std::shared_ptr<const ScanContext> scan_context;
};

bool is_new_keyframe(const Pose& relative, double dt, const KeyframeCriteria& crit);

struct TrackerConfig {
  KeyframeCriteria criteria;
  RegistrationConfig registration;

  void validate() const;
};

struct TrackResult {
  double timestamp = 0.0;
  Pose pose;                   ///< world frame (keyframe pose composed with relative)
  Pose relative_to_keyframe;
  int keyframe_index = 0;      ///< keyframe the relative pose refers to
  bool degraded = false;       ///< registration failed; constant-motion extrapolation
  bool skipped = false;        ///< external odometry made registration unnecessary
  double fitness = 0.0;
  std::shared_ptr<const Keyframe> new_keyframe;
};

/// Keyframe-referenced scan matching.
class Tracker {
 public:
  explicit Tracker(TrackerConfig cfg = {});

  /// `motion_guess` is the pretracker estimate of this cloud relative to the
  /// previous one. `external_odometry` is an absolute pose from a
  /// pre-computed odometry source; when present it takes precedence and may
  /// let the tracker skip registration entirely.
  TrackResult track(std::shared_ptr<const PointCloud> filtered,
                    const std::optional<Pose>& motion_guess = std::nullopt,
                    const std::optional<Pose>& external_odometry = std::nullopt);

  /// True when `precomputed_relative` (to the current keyframe) does not
  /// warrant a new keyframe; the motion is then cached as the next guess.
  bool maybe_skip(const Pose& precomputed_relative, double dt);

  std::size_t registration_calls() const { return registration_calls_; }
  std::size_t keyframe_count() const { return keyframe_count_; }
  std::shared_ptr<const Keyframe> current_keyframe() const { return keyframe_; }

 private:
  std::shared_ptr<const Keyframe> make_keyframe(std::shared_ptr<const PreparedCloud> cloud,
                                                const Pose& relative, double timestamp);

  TrackerConfig cfg_;
  std::shared_ptr<const Keyframe> keyframe_;
  std::optional<Pose> keyframe_odometry_;  // external odometry at the current keyframe
  Pose last_relative_;                     // previous frame relative to the keyframe
  Pose last_motion_;                       // previous frame-to-frame motion
  std::size_t registration_calls_ = 0;
  std::size_t keyframe_count_ = 0;
};

}  // namespace lgslam
