#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lgslam/config.hpp"
#include "lgslam/dataset.hpp"
#include "lgslam/graph_builder.hpp"

namespace lgslam {

/// Random-access scan input. load() may throw; the run then aborts.
class ScanSource {
 public:
  virtual ~ScanSource() = default;
  virtual std::size_t size() const = 0;
  virtual double timestamp(std::size_t i) const = 0;
  virtual PointCloud load(std::size_t i) const = 0;
  /// Absolute pose from an external odometry source, if there is one.
  virtual std::optional<Pose> odometry(std::size_t) const { return std::nullopt; }
};

class KittiSource : public ScanSource {
 public:
  explicit KittiSource(DatasetSequence seq) : seq_(std::move(seq)) {}
  std::size_t size() const override { return seq_.scan_paths.size(); }
  double timestamp(std::size_t i) const override { return seq_.timestamps.at(i); }
  PointCloud load(std::size_t i) const override;
  const DatasetSequence& sequence() const { return seq_; }

 private:
  DatasetSequence seq_;
};

class MemorySource : public ScanSource {
 public:
  MemorySource(std::vector<PointCloud> scans, std::vector<double> timestamps,
               std::vector<Pose> odometry = {});
  std::size_t size() const override { return scans_.size(); }
  double timestamp(std::size_t i) const override { return timestamps_.at(i); }
  PointCloud load(std::size_t i) const override;
  std::optional<Pose> odometry(std::size_t i) const override;

 private:
  std::vector<PointCloud> scans_;
  std::vector<double> timestamps_;
  std::vector<Pose> odometry_;
};

enum class RunMode { Batch, RealtimeSim };

struct PipelineOptions {
  RunMode mode = RunMode::Batch;
  /// Bounded queue size for the streaming path in realtime-sim mode.
  std::size_t stream_queue_capacity = 32;
  /// Playback rate multiplier for realtime-sim (2 = twice the recorded rate).
  double playback_speed = 1.0;
};

struct LatencyStats {
  std::size_t count = 0;
  double p50 = 0, p90 = 0, p99 = 0, max = 0;  // milliseconds
};

LatencyStats summarize_latencies(std::vector<double> samples_ms);

struct PipelineResult {
  std::vector<TimedPose> trajectory;  ///< optimized, one per tracked frame
  std::vector<TimedPose> odometry;    ///< tracker only, one per tracked frame
  std::vector<std::size_t> tracked_frames;
  std::vector<std::shared_ptr<const Keyframe>> keyframes;
  std::vector<Pose> keyframe_poses;  ///< optimized
  std::vector<LoopCandidate> loops;
  std::shared_ptr<GraphBuilder> graph;

  std::size_t frames_in = 0;
  std::size_t dropped_frames = 0;
  std::size_t degraded_frames = 0;
  std::size_t skipped_registrations = 0;
  std::size_t handler_failures = 0;
  std::size_t max_loop_verifications = 0;
  std::map<std::string, LatencyStats> latencies;
  double wall_seconds = 0.0;
};

/// Wires prefilter, pretracker, tracker, floor detection, graph and loop
/// detection as message-passing modules and runs `source` through them.
/// Batch mode feeds one scan at a time and waits for the modules to settle
/// (deterministic); realtime-sim feeds at the recorded rate through bounded
/// drop-oldest queues.
PipelineResult run_pipeline(const SlamConfig& cfg, const ScanSource& source,
                            const PipelineOptions& opts = {});

/// Keyframe clouds moved into the world by their poses, concatenated and
/// voxel-downsampled.
PointCloud build_map(std::span<const std::shared_ptr<const Keyframe>> keyframes,
                     std::span<const Pose> poses, double resolution);

struct RunFiles {
  std::filesystem::path trajectory, odometry, map, graph, report;
  std::filesystem::path ground_truth;  ///< empty without ground truth
};

/// Writes trajectory.txt, odometry.txt, map.ply, graph.g2o and report.json
/// into `dir`. With ground truth, the report carries ATE figures and the truth
/// is also written as ground_truth.txt.
RunFiles write_outputs(const std::filesystem::path& dir, const PipelineResult& result,
                       const SlamConfig& cfg, const PipelineOptions& opts,
                       const std::optional<std::vector<TimedPose>>& truth = std::nullopt,
                       const std::string& truth_source = "none");

}  // namespace lgslam
