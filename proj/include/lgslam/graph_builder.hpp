#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <utility>
#include <vector>

#include "lgslam/floor_detector.hpp"
#include "lgslam/loop_detector.hpp"
#include "lgslam/pose_graph.hpp"
#include "lgslam/tracker.hpp"

namespace lgslam {

struct GraphConfig {
  double odometry_information_translation = 100.0;  // m^-2
  double odometry_information_rotation = 400.0;     // rad^-2
  /// Loop information = odometry information * min(1 / fitness, cap).
  double loop_information_cap = 10.0;
  double floor_information_angle = 100.0;
  double floor_information_offset = 25.0;
  int optimize_every_n_keyframes = 3;
  double incline_threshold_deg = 5.0;
  LmOptions lm;
  ScanContextConfig scan_context;

  void validate() const;
};

/// Builds and optimizes the pose graph from keyframes, floor detections and
/// verified loops. All methods are mutually exclusive; poses() returns a
/// snapshot safe to hand to other threads.
class GraphBuilder {
 public:
  explicit GraphBuilder(GraphConfig cfg = {});

  /// Inserts the keyframe (computing its scan context) and returns the
  /// stored copy carrying the descriptor.
  std::shared_ptr<const Keyframe> add_keyframe(std::shared_ptr<const Keyframe> keyframe);

  /// Floor constraint for an inserted keyframe; nullopt when the detection is
  /// invalid or an incline change was detected.
  std::optional<int> add_floor(int keyframe_index, const FloorCoefficients& coeffs);

  /// Loop edge between two inserted keyframes; nullopt for self-loops and
  /// duplicates.
  std::optional<int> add_loop(const LoopCandidate& loop);

  /// Optimizes once every optimize_every_n_keyframes insertions.
  std::optional<OptimizationReport> maybe_optimize();
  OptimizationReport optimize();

  /// Current estimate of every inserted keyframe, by keyframe index.
  std::vector<Pose> poses() const;
  std::vector<std::shared_ptr<const Keyframe>> keyframes() const;

  std::size_t loop_count() const;
  std::size_t floor_edge_count() const;
  std::size_t incline_changes() const;
  std::vector<OptimizationReport> reports() const;

  /// Run `fn` on the graph under the builder's lock.
  template <class Fn>
  auto with_graph(Fn&& fn) const {
    std::lock_guard lock(mutex_);
    return fn(graph_);
  }

 private:
  Mat6 odometry_information() const;

  GraphConfig cfg_;
  mutable std::mutex mutex_;
  PoseGraph graph_;
  std::vector<std::shared_ptr<const Keyframe>> keyframes_;
  std::vector<int> node_of_;  // keyframe index -> node id
  std::set<std::pair<int, int>> loops_;
  std::optional<Vec3> last_floor_normal_;
  std::size_t floor_edges_ = 0;
  std::size_t incline_changes_ = 0;
  int since_optimize_ = 0;
  std::vector<OptimizationReport> reports_;
};

}  // namespace lgslam
