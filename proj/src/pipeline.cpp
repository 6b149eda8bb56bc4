#include "lgslam/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "lgslam/evaluation.hpp"
#include "lgslam/floor_detector.hpp"
#include "lgslam/kernels.hpp"
#include "lgslam/prefilter.hpp"
#include "lgslam/pretracker.hpp"
#include "lgslam/runtime.hpp"

namespace lgslam {

PointCloud KittiSource::load(std::size_t i) const {
  PointCloud cloud = load_kitti_scan(seq_.scan_paths.at(i));
  cloud.timestamp = seq_.timestamps.at(i);
  cloud.frame_id = "velodyne";
  return cloud;
}

MemorySource::MemorySource(std::vector<PointCloud> scans, std::vector<double> timestamps,
                           std::vector<Pose> odometry)
    : scans_(std::move(scans)), timestamps_(std::move(timestamps)), odometry_(std::move(odometry)) {
  if (scans_.size() != timestamps_.size())
    throw std::invalid_argument("MemorySource: scan and timestamp counts differ");
  if (!odometry_.empty() && odometry_.size() != scans_.size())
    throw std::invalid_argument("MemorySource: odometry count differs from scan count");
}

PointCloud MemorySource::load(std::size_t i) const {
  PointCloud cloud = scans_.at(i);
  cloud.timestamp = timestamps_.at(i);
  return cloud;
}

std::optional<Pose> MemorySource::odometry(std::size_t i) const {
  if (odometry_.empty()) return std::nullopt;
  return odometry_.at(i);
}

LatencyStats summarize_latencies(std::vector<double> samples) {
  LatencyStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  auto pct = [&](double q) {
    const auto idx = static_cast<std::size_t>(std::ceil(q * samples.size())) - 1;
    return samples[std::min(idx, samples.size() - 1)];
  };
  s.p50 = pct(0.50);
  s.p90 = pct(0.90);
  s.p99 = pct(0.99);
  s.max = samples.back();
  return s;
}

PointCloud build_map(std::span<const std::shared_ptr<const Keyframe>> keyframes,
                     std::span<const Pose> poses, double resolution) {
  if (keyframes.size() != poses.size())
    throw std::invalid_argument("build_map: keyframe and pose counts differ");
  PointCloud merged;
  merged.frame_id = "map";
  for (std::size_t k = 0; k < keyframes.size(); ++k) {
    for (const auto& p : keyframes[k]->cloud->cloud().points) merged.points.push_back(poses[k] * p);
  }
  return resolution > 0 ? downsample(merged, resolution) : merged;
}

namespace {

using Clock = std::chrono::steady_clock;
using runtime::Message;

double ms_since(Clock::time_point t) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t).count();
}

struct RawScan {
  std::size_t frame = 0;
  std::shared_ptr<const PointCloud> cloud;
  std::optional<Pose> odometry;
  Clock::time_point fed;
};

struct FilteredScan {
  std::size_t frame = 0;
  std::shared_ptr<const PointCloud> cloud;
  std::optional<Pose> odometry;
  Clock::time_point fed;
};

struct GuessMsg {
  std::size_t frame = 0;
  PretrackGuess guess;
};

struct TrackMsg {
  std::size_t frame = 0;
  TrackResult result;
  Clock::time_point fed;
};

struct FloorMsg {
  std::size_t frame = 0;
  FloorCoefficients coeffs;
};

struct KeyframeMsg {
  std::shared_ptr<const Keyframe> keyframe;
  std::vector<Pose> poses;
};

struct LoopMsg {
  LoopCandidate loop;
};

struct Flush {};

/// All module state plus the cores driving it. Cores are declared last so
/// they stop before the state their handlers touch is destroyed.
class Run {
 public:
  Run(const SlamConfig& cfg, const PipelineOptions& opts)
      : cfg_(cfg),
        opts_(opts),
        pretracker_(cfg.pretracker),
        tracker_(cfg.tracker),
        graph_(std::make_shared<GraphBuilder>(cfg.graph)),
        loop_detector_(cfg.loop),
        prefilter_core_("prefilter", &quiet_),
        pretracker_core_("pretracker", &quiet_),
        tracker_core_("tracker", &quiet_),
        floor_core_("floor", &quiet_),
        graph_core_("graph", &quiet_),
        loop_core_("loop", &quiet_),
        sink_core_("sink", &quiet_) {
    wire();
  }

  PipelineResult execute(const ScanSource& source);

 private:
  bool floor_enabled() const { return cfg_.floor_mode != FloorModeSetting::None; }

  template <class T>
  std::shared_ptr<runtime::DispatchQueue<T>> stream_queue(
      runtime::Core& core, std::function<void(const Message<T>&)> handler) {
    if (opts_.mode == RunMode::RealtimeSim)
      return core.add_queue<T>(std::move(handler), opts_.stream_queue_capacity,
                               runtime::OverflowPolicy::DropOldest);
    return core.add_queue<T>(std::move(handler));
  }

  template <class T>
  std::function<void(const Message<T>&)> timed(const char* stage,
                                              std::function<void(const Message<T>&)> fn) {
    auto* samples = &latencies_[stage];
    return [fn = std::move(fn), samples](const Message<T>& m) {
      const auto start = Clock::now();
      fn(m);
      samples->push_back(ms_since(start));
    };
  }

  void wire();
  void on_raw_prefilter(const Message<RawScan>& m);
  void on_raw_pretracker(const Message<RawScan>& m);
  void tracker_advance(bool flush);
  void process_frame(const FilteredScan& scan, const std::optional<Pose>& guess);
  void on_floor_input(const Message<FilteredScan>& m);
  void graph_advance(bool flush);
  void on_loop(const Message<LoopMsg>& m);
  void on_keyframe_inserted(const Message<KeyframeMsg>& m);

  const SlamConfig& cfg_;
  PipelineOptions opts_;
  runtime::Quiescence quiet_;

  runtime::Notifier<RawScan> raw_out_;
  runtime::Notifier<FilteredScan> filtered_out_;
  runtime::Notifier<GuessMsg> guess_out_;
  runtime::Notifier<TrackMsg> track_out_;
  runtime::Notifier<FloorMsg> floor_out_;
  runtime::Notifier<KeyframeMsg> keyframe_out_;
  runtime::Notifier<LoopMsg> loop_out_;

  // Per-stage handler latencies; each vector is written by one core only.
  std::map<std::string, std::vector<double>> latencies_{
      {"prefilter", {}}, {"pretracker", {}}, {"tracker", {}}, {"floor", {}},
      {"graph", {}},     {"loop", {}},       {"end_to_end", {}}};

  Pretracker pretracker_;

  Tracker tracker_;
  std::map<std::size_t, FilteredScan> pending_scans_;
  std::map<std::size_t, std::optional<Pose>> guesses_;
  std::optional<std::size_t> newest_guess_;

  std::shared_ptr<GraphBuilder> graph_;
  std::deque<TrackMsg> pending_keyframes_;
  std::map<std::size_t, FloorCoefficients> floors_;
  std::optional<std::size_t> newest_floor_;
  std::vector<LoopCandidate> loops_;

  LoopDetector loop_detector_;

  std::vector<TrackMsg> tracked_;

  std::shared_ptr<runtime::DispatchQueue<Flush>> tracker_flush_;
  std::shared_ptr<runtime::DispatchQueue<Flush>> graph_flush_;

  runtime::Core prefilter_core_, pretracker_core_, tracker_core_, floor_core_, graph_core_,
      loop_core_, sink_core_;
};

void Run::wire() {
  runtime::connect(raw_out_, stream_queue<RawScan>(
                                 prefilter_core_, timed<RawScan>("prefilter", [this](const auto& m) {
                                   on_raw_prefilter(m);
                                 })));
  if (cfg_.pretracker.enabled) {
    runtime::connect(raw_out_, stream_queue<RawScan>(pretracker_core_,
                                                     timed<RawScan>("pretracker", [this](const auto& m) {
                                                       on_raw_pretracker(m);
                                                     })));
    runtime::connect(guess_out_,
                     stream_queue<GuessMsg>(tracker_core_, [this](const Message<GuessMsg>& m) {
                       guesses_[m.payload->frame] =
                           m.payload->guess.degraded ? std::nullopt
                                                     : std::optional<Pose>(m.payload->guess.relative);
                       newest_guess_ = std::max(newest_guess_.value_or(0), m.payload->frame);
                       tracker_advance(false);
                     }));
  }
  runtime::connect(filtered_out_,
                   stream_queue<FilteredScan>(tracker_core_, [this](const Message<FilteredScan>& m) {
                     pending_scans_[m.payload->frame] = *m.payload;
                     tracker_advance(false);
                   }));
  tracker_flush_ = tracker_core_.add_queue<Flush>([this](const auto&) { tracker_advance(true); });

  if (floor_enabled()) {
    runtime::connect(filtered_out_,
                     stream_queue<FilteredScan>(floor_core_, timed<FilteredScan>("floor", [this](const auto& m) {
                                                  on_floor_input(m);
                                                })));
    runtime::connect(floor_out_, graph_core_.add_queue<FloorMsg>(
                                     timed<FloorMsg>("graph", [this](const Message<FloorMsg>& m) {
                                       floors_[m.payload->frame] = m.payload->coeffs;
                                       newest_floor_ = std::max(newest_floor_.value_or(0), m.payload->frame);
                                       graph_advance(false);
                                     })));
  }

  // Keyframes and loops are rare and must not be lost: unbounded queues.
  auto keyframe_queue = graph_core_.add_queue<TrackMsg>(
      timed<TrackMsg>("graph", [this](const Message<TrackMsg>& m) {
        pending_keyframes_.push_back(*m.payload);
        graph_advance(false);
      }));
  track_out_.register_observer(std::make_shared<runtime::FilteringQueueObserver<TrackMsg>>(
      keyframe_queue, [](const Message<TrackMsg>& m) { return m.payload->result.new_keyframe != nullptr; }));
  runtime::connect(track_out_, sink_core_.add_queue<TrackMsg>([this](const Message<TrackMsg>& m) {
    tracked_.push_back(*m.payload);
    latencies_.at("end_to_end").push_back(ms_since(m.payload->fed));
  }));
  graph_flush_ = graph_core_.add_queue<Flush>([this](const auto&) { graph_advance(true); });

  runtime::connect(keyframe_out_, loop_core_.add_queue<KeyframeMsg>(timed<KeyframeMsg>(
                                      "loop", [this](const auto& m) { on_keyframe_inserted(m); })));
  runtime::connect(loop_out_, graph_core_.add_queue<LoopMsg>(
                                  timed<LoopMsg>("graph", [this](const auto& m) { on_loop(m); })));
}

void Run::on_raw_prefilter(const Message<RawScan>& m) {
  const RawScan& raw = *m.payload;
  auto filtered = std::make_shared<PointCloud>(prefilter(*raw.cloud, cfg_.prefilter));
  filtered->timestamp = raw.cloud->timestamp;
  filtered->frame_id = raw.cloud->frame_id;
  filtered_out_.publish(
      std::make_shared<const FilteredScan>(FilteredScan{raw.frame, std::move(filtered), raw.odometry, raw.fed}),
      m.timestamp);
}

void Run::on_raw_pretracker(const Message<RawScan>& m) {
  const RawScan& raw = *m.payload;
  guess_out_.publish(
      std::make_shared<const GuessMsg>(GuessMsg{raw.frame, pretracker_.process(*raw.cloud)}),
      m.timestamp);
}

void Run::tracker_advance(bool flush) {
  while (!pending_scans_.empty()) {
    const auto it = pending_scans_.begin();
    const std::size_t frame = it->first;
    std::optional<Pose> guess;
    const auto g = guesses_.find(frame);
    if (g != guesses_.end()) {
      guess = g->second;
    } else if (cfg_.pretracker.enabled && !flush && !(newest_guess_ && *newest_guess_ > frame)) {
      return;  // the guess for this frame may still be coming
    }
    const FilteredScan scan = std::move(it->second);
    pending_scans_.erase(it);
    guesses_.erase(guesses_.begin(), guesses_.upper_bound(frame));
    const auto start = Clock::now();
    process_frame(scan, guess);
    latencies_.at("tracker").push_back(ms_since(start));
  }
}

void Run::process_frame(const FilteredScan& scan, const std::optional<Pose>& guess) {
  TrackResult result = tracker_.track(scan.cloud, guess, scan.odometry);
  track_out_.publish(std::make_shared<const TrackMsg>(TrackMsg{scan.frame, std::move(result), scan.fed}),
                     scan.cloud->timestamp);
}

void Run::on_floor_input(const Message<FilteredScan>& m) {
  const PointCloud& cloud = *m.payload->cloud;
  FloorCoefficients coeffs = cfg_.floor_mode == FloorModeSetting::Rough
                                 ? detect_floor_rough(cloud, cfg_.floor)
                                 : detect_floor_planar(cloud, cfg_.floor);
  coeffs.timestamp = cloud.timestamp;
  floor_out_.publish(std::make_shared<const FloorMsg>(FloorMsg{m.payload->frame, coeffs}), m.timestamp);
}

void Run::graph_advance(bool flush) {
  while (!pending_keyframes_.empty()) {
    const TrackMsg& next = pending_keyframes_.front();
    const std::size_t frame = next.frame;
    std::optional<FloorCoefficients> floor;
    const auto f = floors_.find(frame);
    if (f != floors_.end()) {
      floor = f->second;
    } else if (floor_enabled() && !flush && !(newest_floor_ && *newest_floor_ > frame)) {
      return;
    }
    auto stored = graph_->add_keyframe(next.result.new_keyframe);
    if (floor) graph_->add_floor(stored->index, *floor);
    pending_keyframes_.pop_front();
    floors_.erase(floors_.begin(), floors_.upper_bound(frame));
    graph_->maybe_optimize();
    keyframe_out_.publish(std::make_shared<const KeyframeMsg>(KeyframeMsg{stored, graph_->poses()}),
                          stored->timestamp);
  }
}

void Run::on_keyframe_inserted(const Message<KeyframeMsg>& m) {
  auto found = loop_detector_.process(m.payload->keyframe, m.payload->poses);
  if (found) loop_out_.publish(std::make_shared<const LoopMsg>(LoopMsg{*found}), m.timestamp);
}

void Run::on_loop(const Message<LoopMsg>& m) {
  if (!graph_->add_loop(m.payload->loop)) return;
  loops_.push_back(m.payload->loop);
  spdlog::info("loop closed: keyframe {} -> {} (fitness {:.3f})", m.payload->loop.query_index,
               m.payload->loop.candidate_index, m.payload->loop.fitness.value_or(0.0));
  graph_->optimize();
}

PipelineResult Run::execute(const ScanSource& source) {
  const auto wall_start = Clock::now();
  for (runtime::Core* core : {&prefilter_core_, &pretracker_core_, &tracker_core_, &floor_core_,
                              &graph_core_, &loop_core_, &sink_core_})
    core->start();

  std::exception_ptr feed_error;
  std::thread feeder([&] {
    try {
      const bool realtime = opts_.mode == RunMode::RealtimeSim;
      const double t0 = source.size() ? source.timestamp(0) : 0.0;
      for (std::size_t i = 0; i < source.size(); ++i) {
        auto cloud = std::make_shared<const PointCloud>(source.load(i));
        if (realtime) {
          const auto due = wall_start + std::chrono::duration_cast<Clock::duration>(
                                            std::chrono::duration<double>((source.timestamp(i) - t0) /
                                                                          opts_.playback_speed));
          std::this_thread::sleep_until(due);
        }
        raw_out_.publish(std::make_shared<const RawScan>(
                             RawScan{i, std::move(cloud), source.odometry(i), Clock::now()}),
                         source.timestamp(i));
        if (!realtime) quiet_.wait_idle();
      }
    } catch (...) {
      feed_error = std::current_exception();
    }
  });
  feeder.join();

  quiet_.wait_idle();
  if (feed_error) {
    for (runtime::Core* core : {&prefilter_core_, &pretracker_core_, &tracker_core_, &floor_core_,
                                &graph_core_, &loop_core_, &sink_core_})
      core->stop(false);
    std::rethrow_exception(feed_error);
  }
  tracker_flush_->enqueue({std::make_shared<const Flush>(), 0, 0.0});
  quiet_.wait_idle();
  graph_flush_->enqueue({std::make_shared<const Flush>(), 0, 0.0});
  quiet_.wait_idle();

  PipelineResult out;
  for (runtime::Core* core : {&prefilter_core_, &pretracker_core_, &tracker_core_, &floor_core_,
                              &graph_core_, &loop_core_, &sink_core_}) {
    core->stop(true);
    out.handler_failures += core->failures();
  }

  if (!graph_->keyframes().empty()) graph_->optimize();
  out.graph = graph_;
  out.keyframes = graph_->keyframes();
  out.keyframe_poses = graph_->poses();
  out.loops = loops_;
  out.frames_in = source.size();
  out.max_loop_verifications = loop_detector_.max_verifications_per_query();

  std::sort(tracked_.begin(), tracked_.end(),
            [](const TrackMsg& a, const TrackMsg& b) { return a.frame < b.frame; });
  for (const TrackMsg& t : tracked_) {
    const TrackResult& r = t.result;
    int kf = r.keyframe_index;
    Pose relative = r.relative_to_keyframe;
    if (r.new_keyframe) {
      kf = r.new_keyframe->index;
      relative = Pose::identity();
    }
    if (kf >= static_cast<int>(out.keyframe_poses.size())) continue;
    out.trajectory.push_back({r.timestamp, out.keyframe_poses[kf] * relative});
    out.odometry.push_back({r.timestamp, r.pose});
    out.tracked_frames.push_back(t.frame);
    if (r.degraded) ++out.degraded_frames;
    if (r.skipped) ++out.skipped_registrations;
  }
  out.dropped_frames = out.frames_in - out.tracked_frames.size();
  for (auto& [stage, samples] : latencies_) out.latencies[stage] = summarize_latencies(samples);
  out.wall_seconds = std::chrono::duration<double>(Clock::now() - wall_start).count();
  return out;
}

nlohmann::json ate_json(const AteReport& r) {
  return {{"mean", r.mean}, {"rmse", r.rmse}, {"std", r.std}, {"pairs", r.associations.size()}};
}

}  // namespace

PipelineResult run_pipeline(const SlamConfig& cfg, const ScanSource& source,
                            const PipelineOptions& opts) {
  cfg.validate();
  if (source.size() == 0) throw std::invalid_argument("run_pipeline: the dataset has no scans");
  Run run(cfg, opts);
  return run.execute(source);
}

RunFiles write_outputs(const std::filesystem::path& dir, const PipelineResult& result,
                       const SlamConfig& cfg, const PipelineOptions& opts,
                       const std::optional<std::vector<TimedPose>>& truth,
                       const std::string& truth_source) {
  std::filesystem::create_directories(dir);
  RunFiles files{dir / "trajectory.txt", dir / "odometry.txt", dir / "map.ply", dir / "graph.g2o",
                 dir / "report.json", {}};
  write_tum(files.trajectory, result.trajectory);
  write_tum(files.odometry, result.odometry);
  if (truth) {
    files.ground_truth = dir / "ground_truth.txt";
    write_tum(files.ground_truth, *truth);
  }
  write_ply(files.map, build_map(result.keyframes, result.keyframe_poses,
                                 cfg.prefilter.downsample_resolution));
  {
    std::ofstream g2o(files.graph);
    if (!g2o) throw std::runtime_error("cannot write " + files.graph.string());
    result.graph->with_graph([&](const PoseGraph& g) { g.write_g2o(g2o); });
  }

  nlohmann::json report;
  report["mode"] = opts.mode == RunMode::Batch ? "batch" : "realtime-sim";
  report["frames_in"] = result.frames_in;
  report["frames_tracked"] = result.tracked_frames.size();
  report["dropped_frames"] = result.dropped_frames;
  report["degraded_frames"] = result.degraded_frames;
  report["skipped_registrations"] = result.skipped_registrations;
  report["handler_failures"] = result.handler_failures;
  report["keyframes"] = result.keyframes.size();
  report["loop_count"] = result.loops.size();
  report["floor_edges"] = result.graph->floor_edge_count();
  report["incline_changes"] = result.graph->incline_changes();
  report["max_loop_verifications_per_query"] = result.max_loop_verifications;
  report["wall_seconds"] = result.wall_seconds;
  report["kernel"] = std::string(kernels::active_kernels().name);
  nlohmann::json loops = nlohmann::json::array();
  for (const auto& l : result.loops) {
    loops.push_back({{"query", l.query_index},
                     {"candidate", l.candidate_index},
                     {"descriptor_distance", l.descriptor_distance},
                     {"fitness", l.fitness.value_or(-1.0)}});
  }
  report["loops"] = loops;
  const auto reports = result.graph->reports();
  report["optimizations"] = reports.size();
  if (!reports.empty()) report["final_chi2"] = reports.back().final_chi2;
  nlohmann::json lat;
  for (const auto& [stage, s] : result.latencies) {
    lat[stage] = {{"count", s.count}, {"p50_ms", s.p50}, {"p90_ms", s.p90}, {"p99_ms", s.p99},
                  {"max_ms", s.max}};
  }
  report["latency"] = lat;
  report["ground_truth_source"] = truth_source;
  if (truth && !truth->empty()) {
    try {
      const auto pairs = associate(result.trajectory, *truth, 0.05);
      const auto odo_pairs = associate(result.odometry, *truth, 0.05);
      report["ate"] = {
          {"optimized_aligned", ate_json(compute_ate(pairs, result.trajectory, *truth, true))},
          {"optimized_unaligned", ate_json(compute_ate(pairs, result.trajectory, *truth, false))},
          {"odometry_aligned", ate_json(compute_ate(odo_pairs, result.odometry, *truth, true))},
          {"odometry_unaligned", ate_json(compute_ate(odo_pairs, result.odometry, *truth, false))}};
    } catch (const std::exception& e) {
      report["ate_error"] = e.what();
    }
  }
  std::ofstream out(files.report);
  if (!out) throw std::runtime_error("cannot write " + files.report.string());
  out << report.dump(2) << "\n";
  return files;
}

}  // namespace lgslam
