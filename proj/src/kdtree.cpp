#include "lgslam/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "lgslam/kernels.hpp"

namespace lgslam {

namespace {

struct Candidate {
  double d2;
  std::size_t index;
  bool operator<(const Candidate& o) const {
    return d2 < o.d2 || (d2 == o.d2 && index < o.index);
  }
};

// Fixed-capacity sorted list of the best candidates seen so far.
class BestK {
 public:
  explicit BestK(std::size_t k) : k_(k) { items_.reserve(k + 1); }

  double worst() const {
    return items_.size() < k_ ? std::numeric_limits<double>::infinity() : items_.back().d2;
  }

  void offer(const Candidate& c) {
    if (items_.size() == k_ && !(c < items_.back())) return;
    items_.insert(std::upper_bound(items_.begin(), items_.end(), c), c);
    if (items_.size() > k_) items_.pop_back();
  }

  const std::vector<Candidate>& items() const { return items_; }

 private:
  std::size_t k_;
  std::vector<Candidate> items_;
};

std::vector<double>& scratch(std::size_t n) {
  thread_local std::vector<double> buffer;
  if (buffer.size() < n) buffer.resize(n);
  return buffer;
}

}  // namespace

KdTree::KdTree(std::span<const Point3> points, std::size_t leaf_size) {
  const std::size_t n = points.size();
  index_.resize(n);
  std::iota(index_.begin(), index_.end(), std::size_t{0});
  xs_.resize(n);
  ys_.resize(n);
  zs_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    xs_[i] = points[i].x();
    ys_[i] = points[i].y();
    zs_[i] = points[i].z();
  }
  if (n > 0) {
    nodes_.reserve(2 * n / std::max<std::size_t>(leaf_size, 1) + 2);
    build(0, n, std::max<std::size_t>(leaf_size, 1));
  }
}

int KdTree::build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
  Node node;
  node.begin = begin;
  node.end = end;
  for (int d = 0; d < 3; ++d) {
    node.lo[d] = std::numeric_limits<double>::infinity();
    node.hi[d] = -std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = begin; i < end; ++i) {
    const double c[3] = {xs_[i], ys_[i], zs_[i]};
    for (int d = 0; d < 3; ++d) {
      node.lo[d] = std::min(node.lo[d], c[d]);
      node.hi[d] = std::max(node.hi[d], c[d]);
    }
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size) return id;

  int axis = 0;
  double extent = node.hi[0] - node.lo[0];
  for (int d = 1; d < 3; ++d) {
    if (node.hi[d] - node.lo[d] > extent) {
      extent = node.hi[d] - node.lo[d];
      axis = d;
    }
  }
  if (extent <= 0.0) return id;  // all points coincide

  const std::vector<double>& key = axis == 0 ? xs_ : (axis == 1 ? ys_ : zs_);
  std::vector<std::size_t> order(end - begin);
  std::iota(order.begin(), order.end(), begin);
  const std::size_t mid = order.size() / 2;
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(mid), order.end(),
                   [&](std::size_t a, std::size_t b) {
                     return key[a] < key[b] || (key[a] == key[b] && index_[a] < index_[b]);
                   });
  std::vector<double> nx(order.size()), ny(order.size()), nz(order.size());
  std::vector<std::size_t> ni(order.size());
  for (std::size_t j = 0; j < order.size(); ++j) {
    nx[j] = xs_[order[j]];
    ny[j] = ys_[order[j]];
    nz[j] = zs_[order[j]];
    ni[j] = index_[order[j]];
  }
  std::copy(nx.begin(), nx.end(), xs_.begin() + static_cast<std::ptrdiff_t>(begin));
  std::copy(ny.begin(), ny.end(), ys_.begin() + static_cast<std::ptrdiff_t>(begin));
  std::copy(nz.begin(), nz.end(), zs_.begin() + static_cast<std::ptrdiff_t>(begin));
  std::copy(ni.begin(), ni.end(), index_.begin() + static_cast<std::ptrdiff_t>(begin));

  const int left = build(begin, begin + mid, leaf_size);
  const int right = build(begin + mid, end, leaf_size);
  nodes_[static_cast<std::size_t>(id)].left = left;
  nodes_[static_cast<std::size_t>(id)].right = right;
  return id;
}

double KdTree::box_distance2(const Node& node, const Point3& q) const {
  double d2 = 0.0;
  for (int d = 0; d < 3; ++d) {
    const double v = q[d];
    double gap = 0.0;
    if (v < node.lo[d]) gap = node.lo[d] - v;
    else if (v > node.hi[d]) gap = v - node.hi[d];
    d2 += gap * gap;
  }
  return d2;
}

std::vector<Neighbor> KdTree::nearest(const Point3& query, std::size_t k) const {
  if (empty()) throw std::logic_error("KdTree::nearest on an empty tree");
  if (k == 0 || k > size()) throw std::invalid_argument("KdTree::nearest: k out of range");

  const auto& kern = kernels::active_kernels();
  const double q[3] = {query.x(), query.y(), query.z()};
  BestK best(k);

  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_distance2(node, query) > best.worst()) continue;
    if (node.left < 0) {
      const std::size_t n = node.end - node.begin;
      auto& d2 = scratch(n);
      kern.squared_distances(&xs_[node.begin], &ys_[node.begin], &zs_[node.begin], n, q, d2.data());
      for (std::size_t j = 0; j < n; ++j) best.offer({d2[j], index_[node.begin + j]});
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    // Visit the closer child first (pushed last).
    if (box_distance2(l, query) <= box_distance2(r, query)) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }

  std::vector<Neighbor> out;
  out.reserve(k);
  for (const auto& c : best.items()) out.push_back({c.index, std::sqrt(c.d2)});
  return out;
}

std::optional<Neighbor> KdTree::nearest_within(const Point3& query, double max_distance) const {
  if (empty()) throw std::logic_error("KdTree::nearest_within on an empty tree");
  const auto& kern = kernels::active_kernels();
  const double q[3] = {query.x(), query.y(), query.z()};
  Candidate best{max_distance * max_distance, std::numeric_limits<std::size_t>::max()};
  bool found = false;

  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_distance2(node, query) > best.d2) continue;
    if (node.left < 0) {
      const std::size_t n = node.end - node.begin;
      auto& d2 = scratch(n);
      kern.squared_distances(&xs_[node.begin], &ys_[node.begin], &zs_[node.begin], n, q, d2.data());
      for (std::size_t j = 0; j < n; ++j) {
        const Candidate c{d2[j], index_[node.begin + j]};
        if (c.d2 <= best.d2 && (!found || c < best)) {
          best = c;
          found = true;
        }
      }
      continue;
    }
    const Node& l = nodes_[static_cast<std::size_t>(node.left)];
    const Node& r = nodes_[static_cast<std::size_t>(node.right)];
    if (box_distance2(l, query) <= box_distance2(r, query)) {
      stack.push_back(node.right);
      stack.push_back(node.left);
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  if (!found) return std::nullopt;
  return Neighbor{best.index, std::sqrt(best.d2)};
}

std::vector<std::size_t> KdTree::radius_search(const Point3& query, double radius) const {
  std::vector<std::size_t> out;
  if (empty()) return out;
  const auto& kern = kernels::active_kernels();
  const double q[3] = {query.x(), query.y(), query.z()};
  const double r2 = radius * radius;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_distance2(node, query) > r2) continue;
    if (node.left < 0) {
      const std::size_t n = node.end - node.begin;
      auto& d2 = scratch(n);
      kern.squared_distances(&xs_[node.begin], &ys_[node.begin], &zs_[node.begin], n, q, d2.data());
      for (std::size_t j = 0; j < n; ++j) {
        if (d2[j] <= r2) out.push_back(index_[node.begin + j]);
      }
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t KdTree::count_within(const Point3& query, double radius) const {
  if (empty()) return 0;
  const auto& kern = kernels::active_kernels();
  const double q[3] = {query.x(), query.y(), query.z()};
  const double r2 = radius * radius;
  std::size_t count = 0;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[static_cast<std::size_t>(stack.back())];
    stack.pop_back();
    if (box_distance2(node, query) > r2) continue;
    if (node.left < 0) {
      count += kern.count_within(&xs_[node.begin], &ys_[node.begin], &zs_[node.begin],
                                 node.end - node.begin, q, r2);
      continue;
    }
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  return count;
}

}  // namespace lgslam
