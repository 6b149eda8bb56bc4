#include "lgslam/loop_detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace lgslam {

void LoopConfig::validate() const {
  if (!(search_radius > 0 && min_accumulated_distance > 0 && top_k > 0 &&
        fitness_accept_threshold > 0 && ring_key_candidates > 0 && coarse_distance_factor >= 1 && bev_search_window >= 0 &&
        min_overlap >= 0 && min_overlap <= 1 && overlap_distance > 0 &&
        bev_resolution > 0)) {
    throw std::invalid_argument("invalid loop closure configuration");
  }
  registration.validate();
  scan_context.validate();
}

namespace {

/// Exact k-nearest-neighbour search over ring keys (any dimension).
class RingKeyTree {
 public:
  explicit RingKeyTree(std::vector<Eigen::VectorXd> keys) : keys_(std::move(keys)) {
    order_.resize(keys_.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (!keys_.empty()) root_ = build(0, order_.size(), 0);
  }

  std::vector<std::size_t> nearest(const Eigen::VectorXd& q, std::size_t k) const {
    std::priority_queue<std::pair<double, std::size_t>> heap;  // max-heap on distance
    if (root_ >= 0) search(root_, q, k, heap);
    std::vector<std::pair<double, std::size_t>> found;
    while (!heap.empty()) {
      found.push_back(heap.top());
      heap.pop();
    }
    std::sort(found.begin(), found.end());
    std::vector<std::size_t> out;
    for (const auto& f : found) out.push_back(f.second);
    return out;
  }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % static_cast<int>(keys_[0].size());
    const std::size_t mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::size_t a, std::size_t b) {
                       return keys_[a][axis] < keys_[b][axis] ||
                              (keys_[a][axis] == keys_[b][axis] && a < b);
                     });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int left = build(begin, mid, depth + 1);
    const int right = build(mid + 1, end, depth + 1);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  void search(int id, const Eigen::VectorXd& q, std::size_t k,
              std::priority_queue<std::pair<double, std::size_t>>& heap) const {
    const Node& n = nodes_[id];
    const double d2 = (keys_[n.point] - q).squaredNorm();
    if (heap.size() < k) {
      heap.emplace(d2, n.point);
    } else if (std::make_pair(d2, n.point) < heap.top()) {
      heap.pop();
      heap.emplace(d2, n.point);
    }
    const double diff = q[n.axis] - keys_[n.point][n.axis];
    const int near = diff < 0 ? n.left : n.right;
    const int far = diff < 0 ? n.right : n.left;
    if (near >= 0) search(near, q, k, heap);
    if (far >= 0 && (heap.size() < k || diff * diff <= heap.top().first)) search(far, q, k, heap);
  }

  std::vector<Eigen::VectorXd> keys_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

double wrap_angle(double a) { return std::remainder(a, 2.0 * M_PI); }

}  // namespace

std::vector<std::size_t> gate_candidates(const LoopEntry& query, std::span<const LoopEntry> all,
                                         const LoopConfig& cfg) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& kf = *all[i].keyframe;
    if (kf.index == query.keyframe->index) continue;
    if (query.keyframe->accumulated_distance - kf.accumulated_distance <
        cfg.min_accumulated_distance) {
      continue;
    }
    if ((query.pose.translation() - all[i].pose.translation()).norm() > cfg.search_radius) {
      continue;
    }
    out.push_back(i);
  }
  return out;
}

std::vector<LoopCandidate> rank_candidates(const LoopEntry& query, std::span<const LoopEntry> all,
                                           const std::vector<std::size_t>& gated,
                                           const LoopConfig& cfg) {
  if (gated.empty()) return {};
  const ScanContext& q = *query.keyframe->scan_context;
  std::vector<Eigen::VectorXd> keys;
  keys.reserve(gated.size());
  for (std::size_t g : gated) keys.push_back(all[g].keyframe->scan_context->ring_key);
  const RingKeyTree tree(std::move(keys));
  const auto preselected =
      tree.nearest(q.ring_key, std::min(cfg.ring_key_candidates, gated.size()));

  std::vector<LoopCandidate> ranked;
  for (std::size_t slot : preselected) {
    const LoopEntry& c = all[gated[slot]];
    const auto match = scan_context_distance(q, *c.keyframe->scan_context);
    LoopCandidate lc;
    lc.query_index = query.keyframe->index;
    lc.candidate_index = c.keyframe->index;
    lc.descriptor_distance = match.distance;
    lc.shift = match.shift;
    ranked.push_back(lc);
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    return a.descriptor_distance < b.descriptor_distance;
  });
  if (ranked.size() > static_cast<std::size_t>(cfg.top_k)) ranked.resize(cfg.top_k);
  return ranked;
}

Vec3 bev_correlation_search(const PointCloud& query, const PointCloud& target,
                            const Mat3& rotation, const Vec3& centre, const LoopConfig& cfg) {
  const double res = cfg.bev_resolution;
  const int reach = static_cast<int>(std::ceil(cfg.bev_search_window / res));
  auto cell = [res](double v) { return static_cast<long>(std::floor(v / res)); };

  long min_x = std::numeric_limits<long>::max(), min_y = min_x;
  long max_x = std::numeric_limits<long>::min(), max_y = max_x;
  std::vector<std::pair<long, long>> target_cells;
  for (const auto& p : target.points) {
    if (p.z() < cfg.bev_min_z) continue;
    target_cells.emplace_back(cell(p.x()), cell(p.y()));
    min_x = std::min(min_x, target_cells.back().first);
    max_x = std::max(max_x, target_cells.back().first);
    min_y = std::min(min_y, target_cells.back().second);
    max_y = std::max(max_y, target_cells.back().second);
  }
  if (target_cells.empty()) return centre;
  const long width = max_x - min_x + 1, height = max_y - min_y + 1;
  std::vector<std::uint8_t> occupied(static_cast<std::size_t>(width * height), 0);
  for (const auto& [x, y] : target_cells) occupied[(y - min_y) * width + (x - min_x)] = 1;

  std::vector<std::pair<long, long>> query_cells;
  for (const auto& p : query.points) {
    if (p.z() < cfg.bev_min_z) continue;
    const Vec3 q = rotation * p + centre;
    query_cells.emplace_back(cell(q.x()), cell(q.y()));
  }
  std::sort(query_cells.begin(), query_cells.end());
  query_cells.erase(std::unique(query_cells.begin(), query_cells.end()), query_cells.end());

  long best_score = -1, best_dx = 0, best_dy = 0, best_r2 = 0;
  for (long dy = -reach; dy <= reach; ++dy) {
    for (long dx = -reach; dx <= reach; ++dx) {
      long score = 0;
      for (const auto& [x, y] : query_cells) {
        const long tx = x + dx - min_x, ty = y + dy - min_y;
        if (tx >= 0 && ty >= 0 && tx < width && ty < height) score += occupied[ty * width + tx];
      }
      const long r2 = dx * dx + dy * dy;
      if (score > best_score || (score == best_score && r2 < best_r2)) {
        best_score = score;
        best_dx = dx;
        best_dy = dy;
        best_r2 = r2;
      }
    }
  }
  return centre + Vec3(best_dx * res, best_dy * res, 0.0);
}

double structure_overlap(const PreparedCloud& query, const PreparedCloud& target,
                         const Pose& transform, const LoopConfig& cfg) {
  std::size_t above = 0, matched = 0;
  for (const auto& p : query.cloud().points) {
    if (p.z() < cfg.bev_min_z) continue;
    ++above;
    if (target.tree().nearest_within(transform * p, cfg.overlap_distance)) ++matched;
  }
  return above ? static_cast<double>(matched) / static_cast<double>(above) : 0.0;
}

std::optional<LoopCandidate> verify_loops(const LoopEntry& query, std::span<const LoopEntry> all,
                                          const std::vector<LoopCandidate>& ranked,
                                          const LoopConfig& cfg, std::size_t* verifications) {
  const int sectors = query.keyframe->scan_context->grid.cols();
  const double sector_width = 2.0 * M_PI / sectors;
  RegistrationConfig coarse = cfg.registration;
  coarse.max_correspondence_distance *= cfg.coarse_distance_factor;

  std::optional<LoopCandidate> best;
  std::size_t count = 0;
  for (const auto& cand : ranked) {
    const auto it = std::find_if(all.begin(), all.end(), [&](const LoopEntry& e) {
      return e.keyframe->index == cand.candidate_index;
    });
    if (it == all.end()) continue;
    const LoopEntry& target = *it;

    Pose guess = target.pose.inverse() * query.pose;
    const double sc_yaw = shift_yaw(cand.shift, sectors);
    if (std::abs(wrap_angle(guess.yaw() - sc_yaw)) > sector_width) {
      guess = Pose::from_yaw(sc_yaw, guess.translation());
    }
    if (cfg.bev_search_window > 0) {
      guess = Pose(guess.rotation(),
                   bev_correlation_search(query.keyframe->cloud->cloud(), target.keyframe->cloud->cloud(),
                                          guess.rotation(), guess.translation(), cfg));
    }

    ++count;
    const auto rough = align(*query.keyframe->cloud, *target.keyframe->cloud, guess, coarse);
    if (!std::isfinite(rough.fitness)) {
      spdlog::debug("loop {}->{}: coarse match failed", cand.query_index, cand.candidate_index);
      continue;
    }
    const auto fine =
        align(*query.keyframe->cloud, *target.keyframe->cloud, rough.transform, cfg.registration);
    const double overlap =
        structure_overlap(*query.keyframe->cloud, *target.keyframe->cloud, fine.transform, cfg);
    spdlog::debug("loop {}->{}: sc {:.3f} fitness {:.3f} overlap {:.3f} converged {}",
                  cand.query_index, cand.candidate_index, cand.descriptor_distance, fine.fitness,
                  overlap, fine.converged);
    if (!fine.converged || !(fine.fitness <= cfg.fitness_accept_threshold) ||
        overlap < cfg.min_overlap)
      continue;
    if (!best || fine.fitness < *best->fitness) {
      best = cand;
      best->verified_transform = fine.transform;
      best->fitness = fine.fitness;
    }
  }
  if (verifications) *verifications = count;
  return best;
}

LoopDetector::LoopDetector(LoopConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::optional<LoopCandidate> LoopDetector::process(std::shared_ptr<const Keyframe> query,
                                                   const std::vector<Pose>& poses) {
  if (!query->scan_context) throw std::invalid_argument("loop query keyframe lacks a scan context");
  for (auto& e : entries_) {
    if (e.keyframe->index < static_cast<int>(poses.size())) e.pose = poses[e.keyframe->index];
  }
  LoopEntry q{query, query->index < static_cast<int>(poses.size()) ? poses[query->index]
                                                                   : query->pose};
  last_ = {};
  const auto gated = gate_candidates(q, entries_, cfg_);
  last_.gated = gated.size();
  std::optional<LoopCandidate> found;
  if (!gated.empty()) {
    const auto ranked = rank_candidates(q, entries_, gated, cfg_);
    last_.ranked = ranked.size();
    found = verify_loops(q, entries_, ranked, cfg_, &last_.verifications);
  }
  last_.accepted = found.has_value();
  max_verifications_ = std::max(max_verifications_, last_.verifications);
  entries_.push_back(std::move(q));
  return found;
}

}  // namespace lgslam
