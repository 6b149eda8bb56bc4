#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lgslam/registration.hpp"
#include "lgslam/scan_context.hpp"
#include "lgslam/tracker.hpp"

namespace lgslam {

struct LoopConfig {
  double search_radius = 40.0;
  double min_accumulated_distance = 25.0;
  int top_k = 5;
  double fitness_accept_threshold = 0.5;  // m^2
  /// Minimum structure overlap (see structure_overlap) of an accepted match.
  double min_overlap = 0.5;
  double overlap_distance = 0.3;  // m
  /// Ring-key nearest neighbours taken forward to full descriptor comparison.
  std::size_t ring_key_candidates = 10;
  /// The coarse verification pass uses this multiple of the fine
  /// correspondence distance.
  double coarse_distance_factor = 3.0;
  /// Before scan matching, the guess translation is refined by a
  /// bird's-eye-view occupancy correlation over +-bev_search_window metres.
  /// Zero disables the search.
  double bev_search_window = 10.0;
  double bev_resolution = 0.5;
  double bev_min_z = -1.0;  ///< sensor-frame height below which points are ignored
  RegistrationConfig registration;
  ScanContextConfig scan_context;

  void validate() const;
};

struct LoopCandidate {
  int query_index = 0;
  int candidate_index = 0;
  double descriptor_distance = 0.0;
  int shift = 0;
  /// Query keyframe pose in the candidate keyframe frame.
  std::optional<Pose> verified_transform;
  std::optional<double> fitness;
};

/// A keyframe known to the detector together with its current pose estimate.
struct LoopEntry {
  std::shared_ptr<const Keyframe> keyframe;
  Pose pose;
};

/// Indices into `all` passing the accumulated-distance and radius gates.
std::vector<std::size_t> gate_candidates(const LoopEntry& query, std::span<const LoopEntry> all,
                                         const LoopConfig& cfg);

/// Ring-key kd-tree preselection then full descriptor ranking; at most top_k
/// candidates, ascending by descriptor distance.
std::vector<LoopCandidate> rank_candidates(const LoopEntry& query, std::span<const LoopEntry> all,
                                           const std::vector<std::size_t>& gated,
                                           const LoopConfig& cfg);

/// Scan-matches the query against each ranked candidate (one coarse-to-fine
/// verification per candidate) and returns the accepted best-fitness match.
/// `verifications` counts the pairs matched.
std::optional<LoopCandidate> verify_loops(const LoopEntry& query, std::span<const LoopEntry> all,
                                          const std::vector<LoopCandidate>& ranked,
                                          const LoopConfig& cfg,
                                          std::size_t* verifications = nullptr);

/// Translation t, within +-window of `centre` on x and y, maximizing the
/// number of occupied query cells (after rotation by `rotation`) that land on
/// occupied target cells. Ties go to the offset nearest `centre`.
Vec3 bev_correlation_search(const PointCloud& query, const PointCloud& target,
                            const Mat3& rotation, const Vec3& centre, const LoopConfig& cfg);

/// Fraction of the query points above bev_min_z (sensor frame) whose nearest
/// target point lies within overlap_distance once moved by `transform`; 0 when
/// the query has no such points.
double structure_overlap(const PreparedCloud& query, const PreparedCloud& target,
                         const Pose& transform, const LoopConfig& cfg);

struct LoopQueryStats {
  std::size_t gated = 0;
  std::size_t ranked = 0;
  std::size_t verifications = 0;
  bool accepted = false;
};

/// Stateful detector: keeps every inserted keyframe and answers one query
/// per new keyframe.
class LoopDetector {
 public:
  explicit LoopDetector(LoopConfig cfg = {});

  /// `poses` holds the current estimate for every keyframe index up to and
  /// including the query (optimized where available). Keyframes must carry
  /// a scan context. The query is added to the database afterwards.
  std::optional<LoopCandidate> process(std::shared_ptr<const Keyframe> query,
                                       const std::vector<Pose>& poses);

  const LoopQueryStats& last_query() const { return last_; }
  std::size_t max_verifications_per_query() const { return max_verifications_; }
  std::size_t database_size() const { return entries_.size(); }

 private:
  LoopConfig cfg_;
  std::vector<LoopEntry> entries_;
  LoopQueryStats last_;
  std::size_t max_verifications_ = 0;
};

}  // namespace lgslam
