/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Static 3-D k-d tree with exact nearest-neighbour and radius queries.
 */

#ifndef MVLK_KDTREE_HPP
#define MVLK_KDTREE_HPP

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "mvlk/geometry.hpp"

namespace mvlk {

class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double squared_distance = std::numeric_limits<double>::infinity();
  };

  KdTree() = default;

  explicit KdTree(std::span<const Point3> points) : points_(points.begin(), points.end()) {
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / kLeafSize + 2);
      build(0, points_.size());
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Point3& point(std::size_t i) const { return points_[i]; }

  /// Exact nearest neighbour; ties resolve to the lower index.
  Neighbor nearest(const Point3& q) const {
    Neighbor best;
    if (!nodes_.empty()) nearest_impl(0, q, best);
    return best;
  }

  /// Indices within `radius` (inclusive), ascending.
  void radius_search(const Point3& q, double radius, std::vector<std::size_t>& out) const {
    out.clear();
    if (!nodes_.empty()) radius_impl(0, q, radius * radius, out);
    std::sort(out.begin(), out.end());
  }

  std::vector<std::size_t> radius_search(const Point3& q, double radius) const {
    std::vector<std::size_t> out;
    radius_search(q, radius, out);
    return out;
  }

 private:
  static constexpr std::size_t kLeafSize = 12;

  struct Node {
    std::uint32_t begin = 0, end = 0;
    std::int32_t left = -1, right = -1;
    int axis = 0;
    double split = 0.0;
    Eigen::Vector3d lo, hi;
  };

  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Eigen::Vector3d lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector3d hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    Node node;
    node.begin = static_cast<std::uint32_t>(begin);
    node.end = static_cast<std::uint32_t>(end);
    node.lo = lo;
    node.hi = hi;
    if (end - begin > kLeafSize) {
      Eigen::Index axis = 0;
      (hi - lo).maxCoeff(&axis);
      const std::size_t mid = begin + (end - begin) / 2;
      std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                       order_.begin() + static_cast<std::ptrdiff_t>(mid),
                       order_.begin() + static_cast<std::ptrdiff_t>(end),
                       [&](std::size_t a, std::size_t b) {
                         return points_[a][axis] < points_[b][axis];
                       });
      node.axis = static_cast<int>(axis);
      node.split = points_[order_[mid]][axis];
      nodes_[id] = node;
      const int l = build(begin, mid);
      const int r = build(mid, end);
      nodes_[id].left = l;
      nodes_[id].right = r;
    } else {
      nodes_[id] = node;
    }
    return id;
  }

  static double box_distance2(const Node& n, const Point3& q) {
    const Eigen::Vector3d d = (n.lo - q).cwiseMax(q - n.hi).cwiseMax(0.0);
    return d.squaredNorm();
  }

  void nearest_impl(int id, const Point3& q, Neighbor& best) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, q) > best.squared_distance) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        const double d2 = (points_[idx] - q).squaredNorm();
        if (d2 < best.squared_distance ||
            (d2 == best.squared_distance && idx < best.index)) {
          best.squared_distance = d2;
          best.index = idx;
        }
      }
      return;
    }
    const bool go_left = q[n.axis] < n.split;
    nearest_impl(go_left ? n.left : n.right, q, best);
    nearest_impl(go_left ? n.right : n.left, q, best);
  }

  void radius_impl(int id, const Point3& q, double r2, std::vector<std::size_t>& out) const {
    const Node& n = nodes_[id];
    if (box_distance2(n, q) > r2) return;
    if (n.left < 0) {
      for (std::uint32_t i = n.begin; i < n.end; ++i) {
        const std::size_t idx = order_[i];
        if ((points_[idx] - q).squaredNorm() <= r2) out.push_back(idx);
      }
      return;
    }
    radius_impl(n.left, q, r2, out);
    radius_impl(n.right, q, r2, out);
  }

  std::vector<Point3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace mvlk

#endif  // MVLK_KDTREE_HPP
