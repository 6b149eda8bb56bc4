#include "lgslam/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include <Eigen/Geometry>

namespace lgslam {

std::vector<Association> associate(std::span<const TimedPose> estimates,
                                   std::span<const TimedPose> truth, double max_dt) {
  // |dt| in nanoseconds so equal offsets tie and resolve by index.
  std::vector<std::tuple<long long, std::size_t, std::size_t>> candidates;
  std::size_t lo = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    const double t = estimates[i].timestamp;
    while (lo < truth.size() && truth[lo].timestamp < t - max_dt) ++lo;
    for (std::size_t j = lo; j < truth.size() && truth[j].timestamp <= t + max_dt; ++j) {
      candidates.emplace_back(std::llround(std::abs(truth[j].timestamp - t) * 1e9), i, j);
    }
  }
  std::sort(candidates.begin(), candidates.end());
  std::vector<char> used_est(estimates.size(), 0), used_truth(truth.size(), 0);
  std::vector<Association> out;
  for (const auto& [dt, i, j] : candidates) {
    if (used_est[i] || used_truth[j]) continue;
    used_est[i] = used_truth[j] = 1;
    out.push_back({i, j});
  }
  if (out.empty()) throw EvaluationError("no estimate associates with ground truth within max_dt");
  std::sort(out.begin(), out.end(),
            [](const Association& a, const Association& b) { return a.estimate < b.estimate; });
  return out;
}

Pose fit_rigid(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.size() != to.size() || from.size() < 2) {
    throw std::invalid_argument("rigid fit needs two equally sized sets of >= 2 points");
  }
  Eigen::Matrix3Xd a(3, from.size()), b(3, to.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    a.col(i) = from[i];
    b.col(i) = to[i];
  }
  const Eigen::Matrix4d m = Eigen::umeyama(a, b, false);
  return Pose(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>()).orthonormalized();
}

AteReport compute_ate(std::span<const Association> pairs, std::span<const TimedPose> estimates,
                      std::span<const TimedPose> truth, bool align) {
  if (pairs.size() < 2) throw EvaluationError("ATE needs at least two associated poses");
  std::vector<Vec3> est, ref;
  for (const auto& p : pairs) {
    est.push_back(estimates[p.estimate].pose.translation());
    ref.push_back(truth[p.truth].pose.translation());
  }
  AteReport report;
  report.associations.assign(pairs.begin(), pairs.end());
  report.aligned = align;
  if (align) report.alignment = fit_rigid(est, ref);

  const double n = static_cast<double>(est.size());
  double sum = 0.0, sum_sq = 0.0;
  for (std::size_t i = 0; i < est.size(); ++i) {
    const double e = (report.alignment * est[i] - ref[i]).norm();
    report.errors.push_back(e);
    sum += e;
    sum_sq += e * e;
  }
  report.mean = sum / n;
  report.rmse = std::sqrt(sum_sq / n);
  double dev = 0.0;
  for (double e : report.errors) dev += (e - report.mean) * (e - report.mean);
  report.std = std::sqrt(dev / n);
  return report;
}

}  // namespace lgslam
