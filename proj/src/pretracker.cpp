#include "lgslam/pretracker.hpp"

#include <cmath>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "lgslam/prefilter.hpp"

namespace lgslam {

void PretrackerConfig::validate() const {
  if (!(phase1_keep_fraction > 0 && phase1_keep_fraction < phase2_keep_fraction &&
        phase2_keep_fraction < 1)) {
    throw std::invalid_argument("pretracker keep fractions must satisfy 0 < phase1 < phase2 < 1");
  }
  if (large_cloud_threshold == 0) throw std::invalid_argument("large_cloud_threshold must be > 0");
  registration.validate();
}

PointCloud downsample_to_fraction(const PointCloud& cloud, double keep_fraction) {
  if (cloud.empty()) return cloud.empty_like();
  const auto target = static_cast<std::size_t>(keep_fraction * static_cast<double>(cloud.size()));
  if (target == 0) return cloud.empty_like();

  // Bisection on log(resolution); the count is monotone enough in practice
  // and the search is fully deterministic.
  double lo = std::log(1e-3), hi = std::log(1e3);
  PointCloud best = downsample(cloud, std::exp(hi));
  for (int i = 0; i < 24; ++i) {
    const double mid = 0.5 * (lo + hi);
    PointCloud out = downsample(cloud, std::exp(mid));
    if (out.size() <= target) {
      hi = mid;
      best = std::move(out);
      if (best.size() * 100 >= target * 95) break;
    } else {
      lo = mid;
    }
  }
  return best;
}

Pretracker::Pretracker(PretrackerConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

std::optional<Pose> Pretracker::match(const PreparedCloud& source, const PreparedCloud& target,
                                      const Pose& guess) {
  ++registration_calls_;
  const auto result = align(source, target, guess, cfg_.registration);
  if (!std::isfinite(result.fitness)) return std::nullopt;
  // Running out of iterations while still improving is fine for a guess; a
  // result that matches worse than where it started is not.
  if (!result.converged) {
    const double start = fitness_score(source, target, guess,
                                       cfg_.registration.max_correspondence_distance);
    if (result.fitness > start) return std::nullopt;
  }
  return result.transform;
}

PretrackGuess Pretracker::process(const PointCloud& raw) {
  PretrackGuess out;
  out.timestamp = raw.timestamp;
  const bool large = raw.size() > cfg_.large_cloud_threshold;

  auto phase1 =
      std::make_shared<const PreparedCloud>(downsample_to_fraction(raw, cfg_.phase1_keep_fraction));
  std::shared_ptr<const PreparedCloud> phase2;
  if (!large) {
    phase2 = std::make_shared<const PreparedCloud>(
        downsample_to_fraction(raw, cfg_.phase2_keep_fraction));
  }

  if (!phase1_prev_) {
    out.relative = Pose::identity();
  } else {
    std::optional<Pose> estimate;
    if (!phase1->cloud().empty() && !phase1_prev_->cloud().empty()) {
      estimate = match(*phase1, *phase1_prev_, last_motion_);
      out.phases = estimate ? 1 : 0;
    }
    if (estimate && phase2 && phase2_prev_ && !phase2->cloud().empty() &&
        !phase2_prev_->cloud().empty()) {
      if (auto refined = match(*phase2, *phase2_prev_, *estimate)) {
        estimate = refined;
        out.phases = 2;
      }
    }
    if (estimate) {
      out.relative = *estimate;
      last_motion_ = *estimate;
    } else {
      spdlog::debug("pretracker: match failed at t={:.3f}, using constant velocity", raw.timestamp);
      out.relative = last_motion_;
      out.degraded = true;
    }
  }
  phase1_prev_ = std::move(phase1);
  phase2_prev_ = std::move(phase2);
  return out;
}

}  // namespace lgslam
