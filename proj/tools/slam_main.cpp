#include <cstdio>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "lgslam/config.hpp"
#include "lgslam/dataset.hpp"
#include "lgslam/evaluation.hpp"
#include "lgslam/pipeline.hpp"
#include "lgslam/synthetic.hpp"

using namespace lgslam;

namespace {

RunMode parse_mode(const std::string& mode) {
  if (mode == "batch") return RunMode::Batch;
  if (mode == "realtime-sim") return RunMode::RealtimeSim;
  throw CLI::ValidationError("--mode", "expected batch or realtime-sim");
}

SlamConfig config_or_default(const std::string& path) {
  return path.empty() ? SlamConfig{} : load_config(path);
}

int cmd_run(const std::string& config, const std::string& dataset, const std::string& mode,
            const std::string& out, double speed) {
  const SlamConfig cfg = config_or_default(config);
  const DatasetSequence seq = open_kitti_sequence(dataset);
  PipelineOptions opts;
  opts.mode = parse_mode(mode);
  opts.playback_speed = speed;
  spdlog::info("running {} scans from {} ({})", seq.scan_paths.size(), dataset, mode);
  const KittiSource source(seq);
  const PipelineResult result = run_pipeline(cfg, source, opts);
  const RunFiles files = write_outputs(out, result, cfg, opts, seq.ground_truth, seq.ground_truth_source);
  std::printf("frames %zu, keyframes %zu, loops %zu, dropped %zu, %.2f s\n", result.frames_in,
              result.keyframes.size(), result.loops.size(), result.dropped_frames, result.wall_seconds);
  std::printf("report: %s\n", files.report.c_str());
  return 0;
}

int cmd_eval(const std::string& est_path, const std::string& truth_path, bool no_align,
             double max_dt) {
  const auto est = read_tum(est_path);
  const auto truth = read_tum(truth_path);
  const auto pairs = associate(est, truth, max_dt);
  const AteReport r = compute_ate(pairs, est, truth, !no_align);
  std::printf("pairs %zu\naligned %s\nmean %.6f\nrmse %.6f\nstd %.6f\n", pairs.size(),
              r.aligned ? "yes" : "no", r.mean, r.rmse, r.std);
  return 0;
}

int cmd_export_graph(const std::string& config, const std::string& dataset, const std::string& out) {
  const SlamConfig cfg = config_or_default(config);
  const KittiSource source(open_kitti_sequence(dataset));
  const PipelineResult result = run_pipeline(cfg, source, {});
  std::ofstream file(out);
  if (!file) throw std::runtime_error("cannot write " + out);
  result.graph->with_graph([&](const PoseGraph& g) { g.write_g2o(file); });
  std::printf("wrote %s (%zu keyframes, %zu loops)\n", out.c_str(), result.keyframes.size(),
              result.loops.size());
  return 0;
}

int cmd_synth(const std::string& out, const std::string& scenario, std::uint64_t seed,
              double azimuth_gain, double noise) {
  synthetic::LidarModel lidar;
  lidar.azimuth_gain_error = azimuth_gain;
  lidar.range_noise_sigma = noise;
  synthetic::Sequence seq;
  if (scenario == "loop") {
    seq = synthetic::loop_ring_sequence(seed, lidar);
  } else if (scenario == "straight") {
    seq = synthetic::no_loop_sequence(seed, lidar);
  } else {
    throw CLI::ValidationError("--scenario", "expected loop or straight");
  }
  write_kitti_sequence(out, seq.scans, seq.timestamps, synthetic::relative_to_first(seq.truth));
  std::printf("wrote %zu scans to %s\n", seq.scans.size(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LiDAR graph SLAM"};
  app.require_subcommand(1);
  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::string config, dataset, mode = "batch", out;
  double speed = 1.0;
  auto* run = app.add_subcommand("run", "Run the pipeline over a KITTI-style sequence");
  run->add_option("--config", config, "Config file (defaults when omitted)");
  run->add_option("--dataset", dataset, "Sequence directory")->required();
  run->add_option("--mode", mode, "batch or realtime-sim");
  run->add_option("--out", out, "Output directory")->required();
  run->add_option("--speed", speed, "Playback speed multiplier for realtime-sim");

  std::string est, truth;
  bool no_align = false;
  double max_dt = 0.05;
  auto* eval = app.add_subcommand("eval", "Absolute trajectory error between TUM trajectories");
  eval->add_option("--est", est)->required();
  eval->add_option("--truth", truth)->required();
  eval->add_flag("--no-align", no_align, "Skip the rigid alignment");
  eval->add_option("--max-dt", max_dt, "Association window in seconds");

  auto* exp = app.add_subcommand("export-graph", "Run in batch mode and write the g2o graph");
  exp->add_option("--config", config);
  exp->add_option("--dataset", dataset)->required();
  exp->add_option("--out", out)->required();

  std::string scenario = "loop";
  std::uint64_t seed = 1;
  double azimuth_gain = synthetic::drifting_lidar().azimuth_gain_error, noise = 0.0;
  auto* synth = app.add_subcommand("synth", "Write a simulated sequence in KITTI layout");
  synth->add_option("--out", out)->required();
  synth->add_option("--scenario", scenario, "loop or straight");
  synth->add_option("--seed", seed);
  synth->add_option("--azimuth-gain", azimuth_gain, "Relative azimuth scale error");
  synth->add_option("--range-noise", noise, "Range noise sigma in metres");

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) return cmd_run(config, dataset, mode, out, speed);
    if (*eval) return cmd_eval(est, truth, no_align, max_dt);
    if (*exp) return cmd_export_graph(config, dataset, out);
    if (*synth) return cmd_synth(out, scenario, seed, azimuth_gain, noise);
  } catch (const CLI::Error& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
