#include "lgslam/pose_graph.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

namespace lgslam {

PoseResidual pose_edge_residual(const Pose& from, const Pose& to, const Pose& measurement) {
  PoseResidual out;
  const Pose error = measurement.inverse() * from.inverse() * to;
  out.r = se3_log(error);
  const Mat6 jr_inv = se3_right_jacobian_inverse(out.r);
  out.d_to = jr_inv;
  out.d_from = -jr_inv * adjoint(to.inverse() * from);
  return out;
}

std::pair<Vec3, Vec3> tangent_basis(const Vec3& normal) {
  const Vec3 axis = std::abs(normal.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = (axis - axis.dot(normal) * normal).normalized();
  return {u, normal.cross(u)};
}

Eigen::Vector4d plane_plus(const Eigen::Vector4d& plane, const Vec3& delta) {
  const Vec3 n = plane.head<3>();
  const auto [u, v] = tangent_basis(n);
  const Vec3 updated = (n + delta[0] * u + delta[1] * v).normalized();
  return {updated.x(), updated.y(), updated.z(), plane[3] + delta[2]};
}

Eigen::Vector4d plane_in_frame(const Pose& keyframe, const Eigen::Vector4d& world_plane) {
  const Vec3 n = world_plane.head<3>();
  const Vec3 nk = keyframe.rotation().transpose() * n;
  return {nk.x(), nk.y(), nk.z(), world_plane[3] + n.dot(keyframe.translation())};
}

FloorResidual floor_edge_residual(const Pose& keyframe, const Eigen::Vector4d& world_plane,
                                  const Eigen::Vector4d& measured_plane) {
  FloorResidual out;
  const Vec3 n = world_plane.head<3>();
  const Eigen::Vector4d local = plane_in_frame(keyframe, world_plane);
  const Vec3 nk = local.head<3>();
  const auto [um, vm] = tangent_basis(measured_plane.head<3>().normalized());
  out.r = Vec3(um.dot(nk), vm.dot(nk), local[3] - measured_plane[3]);

  const Mat3 nk_skew = skew(nk);
  out.d_pose.setZero();
  out.d_pose.block<1, 3>(0, 3) = um.transpose() * nk_skew;
  out.d_pose.block<1, 3>(1, 3) = vm.transpose() * nk_skew;
  out.d_pose.block<1, 3>(2, 0) = nk.transpose();

  const auto [u, v] = tangent_basis(n);
  const Mat3& R = keyframe.rotation();
  const Vec3& t = keyframe.translation();
  out.d_plane << um.dot(R.transpose() * u), um.dot(R.transpose() * v), 0.0,
      vm.dot(R.transpose() * u), vm.dot(R.transpose() * v), 0.0, u.dot(t), v.dot(t), 1.0;
  return out;
}

int PoseGraph::add_keyframe_node(const Pose& pose) {
  GraphNode node;
  node.id = static_cast<int>(nodes_.size());
  node.kind = NodeKind::Keyframe;
  node.pose = pose;
  node.fixed = keyframe_count_ == 0;
  nodes_.push_back(node);
  ++keyframe_count_;
  return node.id;
}

int PoseGraph::add_pose_edge(EdgeKind kind, int from, int to, const Pose& measurement,
                             const Mat6& information, RobustKernel kernel, double kernel_scale) {
  if (kind == EdgeKind::Floor) throw std::invalid_argument("use add_floor_edge for floor edges");
  if (from == to) throw std::invalid_argument("pose edge must connect two distinct nodes");
  if (from < 0 || to < 0 || from >= static_cast<int>(nodes_.size()) ||
      to >= static_cast<int>(nodes_.size()) || nodes_[from].kind != NodeKind::Keyframe ||
      nodes_[to].kind != NodeKind::Keyframe) {
    throw std::invalid_argument("pose edge endpoints must be keyframe nodes");
  }
  GraphEdge e;
  e.id = static_cast<int>(edges_.size());
  e.kind = kind;
  e.from = from;
  e.to = to;
  e.measurement = measurement;
  e.information = information;
  e.kernel = kernel;
  e.kernel_scale = kernel_scale;
  edges_.push_back(std::move(e));
  return edges_.back().id;
}

int PoseGraph::floor_node() {
  if (!floor_node_) {
    GraphNode node;
    node.id = static_cast<int>(nodes_.size());
    node.kind = NodeKind::FloorPlane;
    nodes_.push_back(node);
    floor_node_ = node.id;
  }
  return *floor_node_;
}

int PoseGraph::add_floor_edge(int keyframe, const Eigen::Vector4d& measured_plane,
                              const Mat3& information) {
  if (keyframe < 0 || keyframe >= static_cast<int>(nodes_.size()) ||
      nodes_[keyframe].kind != NodeKind::Keyframe) {
    throw std::invalid_argument("floor edge must start at a keyframe node");
  }
  GraphEdge e;
  e.id = static_cast<int>(edges_.size());
  e.kind = EdgeKind::Floor;
  e.from = keyframe;
  e.to = floor_node();
  e.plane_measurement = measured_plane;
  e.information = information;
  edges_.push_back(std::move(e));
  return edges_.back().id;
}

namespace {

struct Robust {
  double rho;
  double weight;
};

Robust robustify(double e2, const GraphEdge& edge) {
  if (edge.kernel != RobustKernel::Huber) return {e2, 1.0};
  const double delta = edge.kernel_scale;
  if (e2 <= delta * delta) return {e2, 1.0};
  const double e = std::sqrt(e2);
  return {2.0 * delta * e - delta * delta, delta / e};
}

}  // namespace

double PoseGraph::edge_chi2(const GraphEdge& e, const std::vector<GraphNode>& nodes) const {
  if (e.kind == EdgeKind::Floor) {
    const Vec3 r = floor_edge_residual(nodes[e.from].pose, nodes[e.to].plane, e.plane_measurement).r;
    return robustify(r.dot(e.information * r), e).rho;
  }
  const Pose error = e.measurement.inverse() * nodes[e.from].pose.inverse() * nodes[e.to].pose;
  const Vec6 r = se3_log(error);
  return robustify(r.dot(e.information * r), e).rho;
}

double PoseGraph::total_chi2(const std::vector<GraphNode>& nodes) const {
  double sum = 0.0;
  for (const auto& e : edges_) sum += edge_chi2(e, nodes);
  return sum;
}

double PoseGraph::chi2() const { return total_chi2(nodes_); }

void PoseGraph::check_connectivity() const {
  std::vector<std::vector<int>> adjacency(nodes_.size());
  for (const auto& e : edges_) {
    if (e.kind == EdgeKind::Floor) continue;
    adjacency[e.from].push_back(e.to);
    adjacency[e.to].push_back(e.from);
  }
  std::vector<char> seen(nodes_.size(), 0);
  std::vector<int> stack;
  for (const auto& n : nodes_) {
    if (n.fixed) {
      seen[n.id] = 1;
      stack.push_back(n.id);
    }
  }
  while (!stack.empty()) {
    const int id = stack.back();
    stack.pop_back();
    for (int next : adjacency[id]) {
      if (!seen[next]) {
        seen[next] = 1;
        stack.push_back(next);
      }
    }
  }
  std::vector<int> loose;
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::Keyframe && !seen[n.id]) loose.push_back(n.id);
  }
  if (!loose.empty()) {
    std::ostringstream msg;
    msg << "pose graph is under-constrained; nodes not connected to the fixed node:";
    for (int id : loose) msg << ' ' << id;
    throw UnderconstrainedGraphError(msg.str(), loose);
  }
}

OptimizationReport PoseGraph::optimize(const LmOptions& options) {
  OptimizationReport report;
  if (nodes_.empty()) throw std::logic_error("cannot optimize an empty graph");
  check_connectivity();

  // Variable layout: free keyframes (6 each), then the floor plane (3) if used.
  std::vector<int> offset(nodes_.size(), -1);
  int dim = 0;
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::Keyframe && !n.fixed) {
      offset[n.id] = dim;
      dim += 6;
    }
  }
  bool plane_used = false;
  for (const auto& e : edges_) plane_used = plane_used || e.kind == EdgeKind::Floor;
  if (floor_node_ && plane_used) {
    offset[*floor_node_] = dim;
    dim += 3;
  }

  double chi2_now = total_chi2(nodes_);
  report.initial_chi2 = chi2_now;
  report.final_chi2 = chi2_now;
  if (dim == 0 || chi2_now == 0.0) {
    report.converged = true;
    return report;
  }

  double lambda = options.initial_lambda;
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    std::vector<Eigen::Triplet<double>> triplets;
    Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);
    auto add_block = [&](int row, int col, const Eigen::MatrixXd& block) {
      for (Eigen::Index i = 0; i < block.rows(); ++i) {
        for (Eigen::Index j = 0; j < block.cols(); ++j) {
          if (block(i, j) != 0.0) triplets.emplace_back(row + i, col + j, block(i, j));
        }
      }
    };

    for (const auto& e : edges_) {
      Eigen::VectorXd r;
      Eigen::MatrixXd ja, jb;  // w.r.t. `from` (pose) and `to` (pose or plane)
      if (e.kind == EdgeKind::Floor) {
        const auto fr = floor_edge_residual(nodes_[e.from].pose, nodes_[e.to].plane,
                                            e.plane_measurement);
        r = fr.r;
        ja = fr.d_pose;
        jb = fr.d_plane;
      } else {
        const auto pr = pose_edge_residual(nodes_[e.from].pose, nodes_[e.to].pose, e.measurement);
        r = pr.r;
        ja = pr.d_from;
        jb = pr.d_to;
      }
      const double w = robustify(r.dot(e.information * r), e).weight;
      const Eigen::MatrixXd info = w * e.information;
      const int oa = offset[e.from], ob = offset[e.to];
      if (oa >= 0) {
        add_block(oa, oa, ja.transpose() * info * ja);
        b.segment(oa, ja.cols()) += ja.transpose() * info * r;
      }
      if (ob >= 0) {
        add_block(ob, ob, jb.transpose() * info * jb);
        b.segment(ob, jb.cols()) += jb.transpose() * info * r;
      }
      if (oa >= 0 && ob >= 0) {
        const Eigen::MatrixXd cross = ja.transpose() * info * jb;
        add_block(oa, ob, cross);
        add_block(ob, oa, cross.transpose());
      }
    }

    Eigen::SparseMatrix<double> h(dim, dim);
    h.setFromTriplets(triplets.begin(), triplets.end());
    const Eigen::VectorXd diag = h.diagonal();

    bool accepted = false;
    bool small_update = false;
    for (int attempt = 0; attempt < 12 && !accepted; ++attempt) {
      Eigen::SparseMatrix<double> damped = h;
      for (int i = 0; i < dim; ++i) damped.coeffRef(i, i) += lambda * std::max(diag[i], 1e-9);
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(damped);
      if (solver.info() != Eigen::Success) {
        lambda *= 10.0;
        continue;
      }
      const Eigen::VectorXd dx = -solver.solve(b);
      if (!dx.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      std::vector<GraphNode> trial = nodes_;
      for (auto& n : trial) {
        const int o = offset[n.id];
        if (o < 0) continue;
        if (n.kind == NodeKind::Keyframe) {
          n.pose = (n.pose * se3_exp(dx.segment<6>(o))).orthonormalized();
        } else {
          n.plane = plane_plus(n.plane, dx.segment<3>(o));
        }
      }
      const double chi2_trial = total_chi2(trial);
      if (chi2_trial < chi2_now) {
        const double decrease = (chi2_now - chi2_trial) / chi2_now;
        nodes_ = std::move(trial);
        chi2_now = chi2_trial;
        report.chi2_trace.push_back(chi2_now);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        small_update = dx.norm() < options.update_tolerance ||
                       decrease < options.relative_chi2_tolerance;
      } else {
        lambda *= 10.0;
        if (dx.norm() < options.update_tolerance) break;
      }
    }
    report.iterations = iter + 1;
    if (!accepted || small_update || chi2_now == 0.0) {
      report.converged = true;
      break;
    }
  }
  report.final_chi2 = chi2_now;
  return report;
}

void PoseGraph::write_g2o(std::ostream& out) const {
  out << std::setprecision(17);
  for (const auto& n : nodes_) {
    if (n.kind == NodeKind::Keyframe) {
      const Vec3& t = n.pose.translation();
      const Eigen::Quaterniond q = n.pose.quaternion();
      out << "VERTEX_SE3:QUAT " << n.id << ' ' << t.x() << ' ' << t.y() << ' ' << t.z() << ' '
          << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w() << '\n';
    } else {
      out << "VERTEX_PLANE " << n.id << ' ' << n.plane[0] << ' ' << n.plane[1] << ' '
          << n.plane[2] << ' ' << n.plane[3] << '\n';
    }
  }
  for (const auto& n : nodes_) {
    if (n.fixed) out << "FIX " << n.id << '\n';
  }
  for (const auto& e : edges_) {
    if (e.kind == EdgeKind::Floor) {
      out << "EDGE_SE3_PLANE " << e.from << ' ' << e.to;
      for (int i = 0; i < 4; ++i) out << ' ' << e.plane_measurement[i];
      for (int i = 0; i < 3; ++i) {
        for (int j = i; j < 3; ++j) out << ' ' << e.information(i, j);
      }
      out << '\n';
      continue;
    }
    // g2o measures rotation error by the quaternion vector part (about half
    // the rotation vector), so the rotational information is scaled by 4.
    Mat6 scale = Mat6::Identity();
    scale.bottomRightCorner<3, 3>() *= 2.0;
    const Mat6 info = scale * e.information * scale;
    const Vec3& t = e.measurement.translation();
    const Eigen::Quaterniond q = e.measurement.quaternion();
    out << "EDGE_SE3:QUAT " << e.from << ' ' << e.to << ' ' << t.x() << ' ' << t.y() << ' '
        << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' ' << q.w();
    for (int i = 0; i < 6; ++i) {
      for (int j = i; j < 6; ++j) out << ' ' << info(i, j);
    }
    out << '\n';
  }
}

}  // namespace lgslam
