#include "lgslam/graph_builder.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace lgslam {

void GraphConfig::validate() const {
  if (!(odometry_information_translation > 0 && odometry_information_rotation > 0 &&
        loop_information_cap > 0 && floor_information_angle > 0 &&
        floor_information_offset > 0 && incline_threshold_deg > 0)) {
    throw std::invalid_argument("graph information values and thresholds must be positive");
  }
  if (optimize_every_n_keyframes < 1) {
    throw std::invalid_argument("optimize_every_n_keyframes must be >= 1");
  }
  scan_context.validate();
}

GraphBuilder::GraphBuilder(GraphConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

Mat6 GraphBuilder::odometry_information() const {
  Vec6 diag;
  diag << Vec3::Constant(cfg_.odometry_information_translation),
      Vec3::Constant(cfg_.odometry_information_rotation);
  return diag.asDiagonal();
}

std::shared_ptr<const Keyframe> GraphBuilder::add_keyframe(
    std::shared_ptr<const Keyframe> keyframe) {
  auto stored = std::make_shared<Keyframe>(*keyframe);
  stored->scan_context =
      std::make_shared<const ScanContext>(make_scan_context(keyframe->cloud->cloud(),
                                                            cfg_.scan_context));
  std::lock_guard lock(mutex_);
  if (stored->index != static_cast<int>(keyframes_.size())) {
    throw std::invalid_argument("keyframes must be inserted in index order");
  }
  Pose initial = stored->pose;
  if (!keyframes_.empty()) {
    initial = graph_.node(node_of_.back()).pose * stored->relative_to_previous;
  }
  const int id = graph_.add_keyframe_node(initial);
  if (!keyframes_.empty()) {
    graph_.add_pose_edge(EdgeKind::Odometry, node_of_.back(), id, stored->relative_to_previous,
                         odometry_information());
  }
  node_of_.push_back(id);
  keyframes_.push_back(stored);
  ++since_optimize_;
  return stored;
}

std::optional<int> GraphBuilder::add_floor(int keyframe_index, const FloorCoefficients& coeffs) {
  std::lock_guard lock(mutex_);
  if (keyframe_index < 0 || keyframe_index >= static_cast<int>(node_of_.size())) {
    throw std::out_of_range("floor detection for an unknown keyframe");
  }
  if (!coeffs.valid) return std::nullopt;
  const Vec3 normal = coeffs.normal().normalized();
  const std::optional<Vec3> previous = last_floor_normal_;
  last_floor_normal_ = normal;
  if (previous) {
    const double angle = std::acos(std::clamp(previous->dot(normal), -1.0, 1.0));
    if (angle > cfg_.incline_threshold_deg * M_PI / 180.0) {
      ++incline_changes_;
      spdlog::info("graph: incline change of {:.1f} deg at keyframe {}", angle * 180.0 / M_PI,
                   keyframe_index);
      return std::nullopt;
    }
  }
  const Mat3 info =
      Vec3(cfg_.floor_information_angle, cfg_.floor_information_angle,
           cfg_.floor_information_offset)
          .asDiagonal();
  ++floor_edges_;
  return graph_.add_floor_edge(node_of_[keyframe_index], coeffs.plane, info);
}

std::optional<int> GraphBuilder::add_loop(const LoopCandidate& loop) {
  std::lock_guard lock(mutex_);
  if (!loop.verified_transform || !loop.fitness) {
    throw std::invalid_argument("only verified loops can be added");
  }
  const int q = loop.query_index, c = loop.candidate_index;
  if (q == c || q < 0 || c < 0 || q >= static_cast<int>(node_of_.size()) ||
      c >= static_cast<int>(node_of_.size())) {
    return std::nullopt;
  }
  if (!loops_.insert({std::max(q, c), std::min(q, c)}).second) return std::nullopt;
  const double scale = std::min(1.0 / std::max(*loop.fitness, 1e-12), cfg_.loop_information_cap);
  return graph_.add_pose_edge(EdgeKind::Loop, node_of_[c], node_of_[q], *loop.verified_transform,
                              odometry_information() * scale, RobustKernel::Huber, 1.0);
}

std::optional<OptimizationReport> GraphBuilder::maybe_optimize() {
  {
    std::lock_guard lock(mutex_);
    if (since_optimize_ < cfg_.optimize_every_n_keyframes) return std::nullopt;
  }
  return optimize();
}

OptimizationReport GraphBuilder::optimize() {
  std::lock_guard lock(mutex_);
  since_optimize_ = 0;
  if (keyframes_.empty()) return {};
  auto report = graph_.optimize(cfg_.lm);
  reports_.push_back(report);
  return report;
}

std::vector<Pose> GraphBuilder::poses() const {
  std::lock_guard lock(mutex_);
  std::vector<Pose> out;
  out.reserve(node_of_.size());
  for (int id : node_of_) out.push_back(graph_.node(id).pose);
  return out;
}

std::vector<std::shared_ptr<const Keyframe>> GraphBuilder::keyframes() const {
  std::lock_guard lock(mutex_);
  return keyframes_;
}

std::size_t GraphBuilder::loop_count() const {
  std::lock_guard lock(mutex_);
  return loops_.size();
}

std::size_t GraphBuilder::floor_edge_count() const {
  std::lock_guard lock(mutex_);
  return floor_edges_;
}

std::size_t GraphBuilder::incline_changes() const {
  std::lock_guard lock(mutex_);
  return incline_changes_;
}

std::vector<OptimizationReport> GraphBuilder::reports() const {
  std::lock_guard lock(mutex_);
  return reports_;
}

}  // namespace lgslam
