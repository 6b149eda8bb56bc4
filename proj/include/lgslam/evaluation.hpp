#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "lgslam/dataset.hpp"

namespace lgslam {

struct Association {
  std::size_t estimate;
  std::size_t truth;
};

class EvaluationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Greedy nearest-timestamp matching: all pairs within max_dt are taken in
/// order of increasing |dt|, each pose used at most once. Result is sorted
/// by estimate index. Throws EvaluationError when nothing associates.
std::vector<Association> associate(std::span<const TimedPose> estimates,
                                   std::span<const TimedPose> truth, double max_dt);

struct AteReport {
  double mean = 0.0;
  double rmse = 0.0;
  double std = 0.0;
  std::vector<double> errors;
  std::vector<Association> associations;
  bool aligned = false;
  Pose alignment;  ///< applied to the estimates (identity when not aligned)
};

/// Absolute trajectory error over associated positions, optionally after the
/// closed-form rigid (no scale) alignment of estimates onto truth.
AteReport compute_ate(std::span<const Association> pairs, std::span<const TimedPose> estimates,
                      std::span<const TimedPose> truth, bool align);

/// Least-squares rigid transform mapping `from` onto `to`.
Pose fit_rigid(std::span<const Vec3> from, std::span<const Vec3> to);

}  // namespace lgslam
