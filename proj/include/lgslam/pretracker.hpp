#pragma once

#include <cstddef>
#include <memory>
#include <optional>

#include "lgslam/registration.hpp"

namespace lgslam {

struct PretrackerConfig {
  bool enabled = true;
  double phase1_keep_fraction = 0.05;
  double phase2_keep_fraction = 0.2;
  std::size_t large_cloud_threshold = 60000;
  RegistrationConfig registration{RegistrationMethod::IcpPointToPoint, 64, 1e-3, 2.0, 20};

  void validate() const;
};

struct PretrackGuess {
  double timestamp = 0.0;
  /// Motion of this cloud relative to the previous one (current -> previous frame).
  Pose relative;
  bool degraded = false;
  int phases = 0;  ///< registration phases run (0 for the first cloud or a fallback)
};

/// Voxel-grid downsampling whose resolution is found by bisection so that
/// the output keeps at most `keep_fraction` of the input (and as close to it
/// as the search allows).
PointCloud downsample_to_fraction(const PointCloud& cloud, double keep_fraction);

/// Two-scale scan-to-scan matcher run on raw clouds to seed the tracker.
class Pretracker {
 public:
  explicit Pretracker(PretrackerConfig cfg = {});

  PretrackGuess process(const PointCloud& raw);

  std::size_t registration_calls() const { return registration_calls_; }

 private:
  std::optional<Pose> match(const PreparedCloud& source, const PreparedCloud& target,
                            const Pose& guess);

  PretrackerConfig cfg_;
  std::shared_ptr<const PreparedCloud> phase1_prev_;
  std::shared_ptr<const PreparedCloud> phase2_prev_;
  Pose last_motion_;
  std::size_t registration_calls_ = 0;
};

}  // namespace lgslam
