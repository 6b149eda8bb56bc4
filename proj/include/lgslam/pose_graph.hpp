#pragma once

#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "lgslam/floor_detector.hpp"
#include "lgslam/pose.hpp"

namespace lgslam {

enum class NodeKind { Keyframe, FloorPlane };
enum class EdgeKind { Odometry, Loop, Floor };
enum class RobustKernel { None, Huber };

struct GraphNode {
  int id = 0;
  NodeKind kind = NodeKind::Keyframe;
  Pose pose;                                             ///< keyframe state
  Eigen::Vector4d plane = Eigen::Vector4d(0, 0, 1, 0);   ///< floor-plane state (n, d)
  bool fixed = false;
};

struct GraphEdge {
  int id = 0;
  EdgeKind kind = EdgeKind::Odometry;
  int from = 0;  ///< keyframe node
  int to = 0;    ///< keyframe node, or the floor node for Floor edges
  Pose measurement;                    ///< Odometry / Loop: pose of `to` in `from`
  Eigen::Vector4d plane_measurement;   ///< Floor: plane in the keyframe frame
  Eigen::MatrixXd information;         ///< 6x6 or 3x3, SPD
  RobustKernel kernel = RobustKernel::None;
  double kernel_scale = 1.0;
};

struct OptimizationReport {
  double initial_chi2 = 0.0;
  double final_chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> chi2_trace;  ///< chi2 after each accepted step
};

/// Raised when the normal equations cannot be solved because part of the
/// graph is not tied to the fixed node.
class UnderconstrainedGraphError : public std::runtime_error {
 public:
  UnderconstrainedGraphError(const std::string& what, std::vector<int> nodes)
      : std::runtime_error(what), nodes_(std::move(nodes)) {}
  const std::vector<int>& nodes() const { return nodes_; }

 private:
  std::vector<int> nodes_;
};

/// Pose residual log(Z^-1 A^-1 B) and its Jacobians for right perturbations
/// A exp(da), B exp(db).
struct PoseResidual {
  Vec6 r;
  Mat6 d_from;
  Mat6 d_to;
};
PoseResidual pose_edge_residual(const Pose& from, const Pose& to, const Pose& measurement);

/// Floor residual: the world plane expressed in the keyframe frame compared
/// with the measurement (two tangent-angle components + offset difference).
/// Jacobians w.r.t. a right perturbation of the keyframe and a tangent
/// update of the plane (see plane_plus).
struct FloorResidual {
  Vec3 r;
  Eigen::Matrix<double, 3, 6> d_pose;
  Mat3 d_plane;
};
FloorResidual floor_edge_residual(const Pose& keyframe, const Eigen::Vector4d& world_plane,
                                  const Eigen::Vector4d& measured_plane);

/// Plane update: n <- normalize(n + a u + b v), d <- d + c, with (u, v) an
/// orthonormal basis of the plane normal's tangent space.
Eigen::Vector4d plane_plus(const Eigen::Vector4d& plane, const Vec3& delta);
std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal);

/// Plane (n, d) of the world expressed in the frame of `keyframe`.
Eigen::Vector4d plane_in_frame(const Pose& keyframe, const Eigen::Vector4d& world_plane);

struct LmOptions {
  int max_iterations = 30;
  double initial_lambda = 1e-4;
  double relative_chi2_tolerance = 1e-6;
  double update_tolerance = 1e-8;
};

class PoseGraph {
 public:
  /// Adds a keyframe node; the first one is fixed.
  int add_keyframe_node(const Pose& pose);
  int add_pose_edge(EdgeKind kind, int from, int to, const Pose& measurement,
                    const Mat6& information, RobustKernel kernel = RobustKernel::None,
                    double kernel_scale = 1.0);
  /// The single global floor-plane node, created on first use at (0, 0, 1, 0).
  int floor_node();
  bool has_floor_node() const { return floor_node_.has_value(); }
  int add_floor_edge(int keyframe, const Eigen::Vector4d& measured_plane, const Mat3& information);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  const std::vector<GraphEdge>& edges() const { return edges_; }
  const GraphNode& node(int id) const { return nodes_.at(id); }
  std::size_t keyframe_count() const { return keyframe_count_; }

  double chi2() const;
  OptimizationReport optimize(const LmOptions& options = {});

  /// g2o text format: keyframes as VERTEX_SE3:QUAT, odometry/loop edges as
  /// EDGE_SE3:QUAT. The floor node and floor edges use the g2o plane types.
  void write_g2o(std::ostream& out) const;

 private:
  double edge_chi2(const GraphEdge& e, const std::vector<GraphNode>& nodes) const;
  double total_chi2(const std::vector<GraphNode>& nodes) const;
  void check_connectivity() const;

  std::vector<GraphNode> nodes_;
  std::vector<GraphEdge> edges_;
  std::optional<int> floor_node_;
  std::size_t keyframe_count_ = 0;
};

}  // namespace lgslam
