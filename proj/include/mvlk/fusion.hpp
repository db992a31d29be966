/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Early fusion (world-frame merge of synchronized views, temporal
 * integration with a per-point time index) and late fusion of per-view
 * detections (overlap clustering followed by NMS or average fusion).
 */

#ifndef MVLK_FUSION_HPP
#define MVLK_FUSION_HPP

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"

namespace mvlk {

// ---------------------------------------------------------------------------
// Early fusion
// ---------------------------------------------------------------------------

struct ViewFrameSet {
  std::map<std::uint16_t, PointCloud> frames;          // node id -> frame
  std::map<std::uint16_t, RigidTransform> extrinsics;  // node id -> (node -> world)
  std::int64_t sync_window_ns = 5'000'000;
};

/// World-frame concatenation of every view, ordered by node id. Each output
/// point carries its node id in `point_source`. The output timestamp is the
/// earliest view timestamp.
inline PointCloud early_fuse(const ViewFrameSet& set) {
  PointCloud out;
  if (set.frames.empty()) return out;
  std::int64_t tmin = INT64_MAX, tmax = INT64_MIN;
  std::size_t total = 0;
  bool time_index = true, intensity = true;
  for (const auto& [node, frame] : set.frames) {
    if (!set.extrinsics.contains(node)) {
      throw Error(ErrorKind::kConfigInvalid, "no extrinsic for node " + std::to_string(node));
    }
    tmin = std::min(tmin, frame.timestamp_ns);
    tmax = std::max(tmax, frame.timestamp_ns);
    total += frame.size();
    time_index = time_index && (frame.has_time_index() || frame.empty());
    intensity = intensity && (frame.has_intensity() || frame.empty());
  }
  if (tmax - tmin > set.sync_window_ns) {
    throw Error(ErrorKind::kTimestampSkew, "view timestamps differ by " + std::to_string(tmax - tmin) + " ns");
  }
  out.timestamp_ns = tmin;
  out.points.reserve(total);
  out.point_source.reserve(total);
  for (const auto& [node, frame] : set.frames) {
    const RigidTransform& t = set.extrinsics.at(node);
    for (std::size_t i = 0; i < frame.size(); ++i) {
      out.points.push_back(t.apply(frame.points[i]));
      out.point_source.push_back(node);
      if (intensity) out.intensity.push_back(frame.intensity[i]);
      if (time_index) out.time_index.push_back(frame.time_index[i]);
    }
  }
  return out;
}

/// Concatenates time-ordered frames, tagging each point with the position of
/// its frame (0 = oldest). The output timestamp is that of the newest frame.
inline PointCloud temporal_integrate(std::span<const PointCloud> frames) {
  PointCloud out;
  if (frames.empty()) return out;
  out.timestamp_ns = frames.back().timestamp_ns;
  out.source_node = frames.back().source_node;
  const bool intensity = std::all_of(frames.begin(), frames.end(),
                                     [](const PointCloud& f) { return f.has_intensity() || f.empty(); });
  const bool source = std::all_of(frames.begin(), frames.end(),
                                  [](const PointCloud& f) { return f.has_point_source() || f.empty(); });
  for (std::size_t k = 0; k < frames.size(); ++k) {
    const auto& f = frames[k];
    out.points.insert(out.points.end(), f.points.begin(), f.points.end());
    out.time_index.insert(out.time_index.end(), f.size(), static_cast<std::uint16_t>(k));
    if (intensity) out.intensity.insert(out.intensity.end(), f.intensity.begin(), f.intensity.end());
    if (source) out.point_source.insert(out.point_source.end(), f.point_source.begin(), f.point_source.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Late fusion
// ---------------------------------------------------------------------------

struct ViewDetections {
  int view_id = 0;
  std::vector<Box3D> boxes;
};

struct ClusterMember {
  Box3D box;
  int view_id = 0;
  std::size_t input_order = 0;  // position in the flattened input
};

struct BoxCluster {
  std::vector<ClusterMember> members;
};

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
  }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace detail

/// Connected components of same-class boxes under overlap >= threshold.
/// Clusters are ordered by their first member; members keep input order.
inline std::vector<BoxCluster> cluster_boxes(std::span<const ViewDetections> views, double overlap_threshold,
                                             OverlapMetric metric = OverlapMetric::kIou3d) {
  if (!(overlap_threshold > 0.0 && overlap_threshold < 1.0)) {
    throw Error(ErrorKind::kConfigInvalid, "overlap threshold must lie in (0, 1)");
  }
  std::vector<ClusterMember> all;
  for (const auto& v : views) {
    for (const auto& b : v.boxes) all.push_back({b, v.view_id, all.size()});
  }
  detail::DisjointSet ds(all.size());
  for (std::size_t i = 0; i < all.size(); ++i) {
    for (std::size_t j = i + 1; j < all.size(); ++j) {
      if (all[i].box.class_label != all[j].box.class_label) continue;
      if (overlap(metric, all[i].box, all[j].box) >= overlap_threshold) ds.unite(i, j);
    }
  }
  std::map<std::size_t, std::size_t> root_to_cluster;
  std::vector<BoxCluster> out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const std::size_t r = ds.find(i);
    auto [it, inserted] = root_to_cluster.try_emplace(r, out.size());
    if (inserted) out.emplace_back();
    out[it->second].members.push_back(all[i]);
  }
  return out;
}

/// Highest-score member per cluster; ties go to the lower view id, then the
/// earlier input.
inline std::vector<Box3D> nms_fuse(std::span<const BoxCluster> clusters) {
  std::vector<Box3D> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) {
    const auto best = std::min_element(c.members.begin(), c.members.end(),
                                       [](const ClusterMember& a, const ClusterMember& b) {
                                         if (a.box.score != b.box.score) return a.box.score > b.box.score;
                                         if (a.view_id != b.view_id) return a.view_id < b.view_id;
                                         return a.input_order < b.input_order;
                                       });
    out.push_back(best->box);
  }
  return out;
}

/// Mean box per cluster. Center and size are arithmetic means (score
/// weighted when `score_weighted`), yaw is the direction of the mean unit
/// heading after folding every yaw to within a quarter turn of the first
/// member's, and the score is the member maximum.
inline std::vector<Box3D> average_fuse(std::span<const BoxCluster> clusters, bool score_weighted = false) {
  std::vector<Box3D> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) {
    if (c.members.empty()) continue;
    const double ref = c.members.front().box.yaw;
    Point3 center = Point3::Zero();
    Eigen::Vector3d size = Eigen::Vector3d::Zero();
    Vec2 heading = Vec2::Zero();
    double wsum = 0.0, score = 0.0;
    for (const auto& m : c.members) {
      const double w = score_weighted ? m.box.score : 1.0;
      center += w * m.box.center;
      size += w * m.box.size;
      const double yaw = ref + normalize_half_angle(m.box.yaw - ref);
      heading += w * Vec2(std::cos(yaw), std::sin(yaw));
      wsum += w;
      score = std::max(score, m.box.score);
    }
    if (!(wsum > 0.0)) throw Error(ErrorKind::kDegenerateYaw, "cluster weights sum to zero");
    heading /= wsum;
    if (heading.norm() < 1e-9) throw Error(ErrorKind::kDegenerateYaw, "mean heading vanishes");
    Box3D b = c.members.front().box;
    b.center = center / wsum;
    b.size = size / wsum;
    b.yaw = normalize_angle(std::atan2(heading.y(), heading.x()));
    b.score = score;
    b.track_id.reset();
    out.push_back(b);
  }
  return out;
}

}  // namespace mvlk

#endif  // MVLK_FUSION_HPP
