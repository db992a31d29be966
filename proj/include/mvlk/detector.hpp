/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Non-learned baseline 3D detector: RANSAC ground removal, Euclidean
 * clustering, minimum-area oriented box fitting and size-prior classes.
 */

#ifndef MVLK_DETECTOR_HPP
#define MVLK_DETECTOR_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <random>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/kdtree.hpp"

namespace mvlk {

struct SizeRange {
  double lo = 0.0, hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
};

struct SizePrior {
  ObjectClass class_label = ObjectClass::kCar;
  SizeRange length, width, height;  // length >= width by convention
};

struct DetectorConfig {
  double ground_distance_threshold = 0.15;
  int ransac_ground_iterations = 200;
  double ground_max_tilt_deg = 15.0;
  double min_ground_fraction = 0.1;
  double cluster_distance = 0.5;
  int min_cluster_points = 15;
  /// Clusters longer or taller than this are static structure, not objects.
  double max_object_length = 8.0;
  double max_object_height = 4.0;
  std::vector<SizePrior> priors = {
      {ObjectClass::kCar, {3.0, 6.0}, {1.4, 2.6}, {1.0, 2.4}},
      {ObjectClass::kCyclist, {1.2, 2.2}, {0.45, 1.0}, {1.0, 2.2}},
      {ObjectClass::kPedestrian, {0.2, 0.7}, {0.2, 0.7}, {1.0, 2.2}},
  };
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ground_distance_threshold > 0.0) || ransac_ground_iterations < 1 || !(cluster_distance > 0.0) ||
        min_cluster_points < 1 || !(ground_max_tilt_deg > 0.0) || !(max_object_length > 0.0) ||
        !(max_object_height > 0.0)) {
      throw Error(ErrorKind::kConfigInvalid, "detector thresholds must be positive");
    }
    std::vector<std::pair<double, double>> areas;
    for (const auto& p : priors) {
      for (const auto* r : {&p.length, &p.width, &p.height}) {
        if (!(r->lo > 0.0) || r->hi < r->lo) throw Error(ErrorKind::kConfigInvalid, "empty size prior");
      }
      areas.emplace_back(p.length.lo * p.width.lo, p.length.hi * p.width.hi);
    }
    std::sort(areas.begin(), areas.end());
    for (std::size_t i = 1; i < areas.size(); ++i) {
      if (areas[i].first <= areas[i - 1].second) {
        throw Error(ErrorKind::kConfigInvalid, "size priors overlap in footprint area");
      }
    }
  }
};

/// Plane n . p + d = 0 with unit normal pointing up.
struct GroundPlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double distance(const Point3& p) const { return normal.dot(p) + offset; }
  /// Height of the plane at (x, y).
  double height_at(double x, double y) const {
    return std::abs(normal.z()) > 1e-9 ? -(normal.x() * x + normal.y() * y + offset) / normal.z() : 0.0;
  }
};

struct GroundSplit {
  PointCloud ground;
  PointCloud non_ground;
  GroundPlane plane;
};

/// RANSAC ground plane restricted to normals within `ground_max_tilt_deg` of
/// +z, refined by a least-squares fit on its inliers.
inline GroundSplit remove_ground(const PointCloud& cloud, const DetectorConfig& cfg) {
  cfg.validate();
  if (cloud.empty()) throw Error(ErrorKind::kEmptyInput, "cloud is empty");
  const std::size_t n = cloud.size();
  const double cos_tilt = std::cos(cfg.ground_max_tilt_deg * kPi / 180.0);
  const double thr = cfg.ground_distance_threshold;

  std::mt19937_64 rng(cfg.seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::size_t best_count = 0;
  GroundPlane best;
  for (int it = 0; it < cfg.ransac_ground_iterations && n >= 3; ++it) {
    const auto& a = cloud.points[pick(rng)];
    const auto& b = cloud.points[pick(rng)];
    const auto& c = cloud.points[pick(rng)];
    Eigen::Vector3d nrm = (b - a).cross(c - a);
    const double len = nrm.norm();
    if (len < 1e-9) continue;
    nrm /= len;
    if (nrm.z() < 0.0) nrm = -nrm;
    if (nrm.z() < cos_tilt) continue;
    GroundPlane pl{nrm, -nrm.dot(a)};
    std::size_t count = 0;
    for (const auto& p : cloud.points) count += std::abs(pl.distance(p)) <= thr;
    if (count > best_count) {
      best_count = count;
      best = pl;
    }
  }
  const auto min_count = std::max<std::size_t>(
      3, static_cast<std::size_t>(std::ceil(cfg.min_ground_fraction * static_cast<double>(n))));
  if (best_count < min_count) throw Error(ErrorKind::kNoPlane, "no near-horizontal plane with enough support");

  // Least-squares refinement on the inliers.
  Point3 mean = Point3::Zero();
  std::size_t cnt = 0;
  for (const auto& p : cloud.points) {
    if (std::abs(best.distance(p)) <= thr) {
      mean += p;
      ++cnt;
    }
  }
  mean /= static_cast<double>(cnt);
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : cloud.points) {
    if (std::abs(best.distance(p)) <= thr) cov += (p - mean) * (p - mean).transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d nrm = eig.eigenvectors().col(0).normalized();
  if (nrm.z() < 0.0) nrm = -nrm;
  if (nrm.z() >= cos_tilt && eig.eigenvalues()(1) > 1e-12) best = GroundPlane{nrm, -nrm.dot(mean)};

  GroundSplit split;
  split.plane = best;
  split.ground = cloud.empty_like();
  split.non_ground = cloud.empty_like();
  for (std::size_t i = 0; i < n; ++i) {
    cloud.copy_point_to(i, std::abs(best.distance(cloud.points[i])) <= thr ? split.ground : split.non_ground);
  }
  return split;
}

/// Connected components under point distance <= cluster_distance. Points
/// are put in lexicographic order first so the output does not depend on
/// input order; clusters are sorted by size (descending), then by their
/// first point.
inline std::vector<PointCloud> cluster_euclidean(const PointCloud& cloud, const DetectorConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& pa = cloud.points[a];
    const auto& pb = cloud.points[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    if (pa.z() != pb.z()) return pa.z() < pb.z();
    return a < b;
  });
  const PointCloud sorted = cloud.subset(order);
  const KdTree tree(sorted.points);
  std::vector<int> label(sorted.size(), -1);
  std::vector<std::vector<std::size_t>> groups;
  std::vector<std::size_t> queue, nb;
  for (std::size_t seed = 0; seed < sorted.size(); ++seed) {
    if (label[seed] >= 0) continue;
    const int id = static_cast<int>(groups.size());
    groups.emplace_back();
    queue.assign(1, seed);
    label[seed] = id;
    while (!queue.empty()) {
      const std::size_t i = queue.back();
      queue.pop_back();
      groups[id].push_back(i);
      tree.radius_search(sorted.points[i], cfg.cluster_distance, nb);
      for (auto j : nb) {
        if (label[j] < 0) {
          label[j] = id;
          queue.push_back(j);
        }
      }
    }
  }
  for (auto& g : groups) std::sort(g.begin(), g.end());
  std::erase_if(groups, [&](const auto& g) { return static_cast<int>(g.size()) < cfg.min_cluster_points; });
  std::stable_sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    return a.front() < b.front();
  });
  std::vector<PointCloud> out;
  out.reserve(groups.size());
  for (const auto& g : groups) out.push_back(sorted.subset(g));
  return out;
}

namespace detail {

/// Andrew's monotone chain; counter-clockwise, no collinear points.
inline std::vector<Vec2> convex_hull(std::vector<Vec2> pts) {
  std::sort(pts.begin(), pts.end(), [](const Vec2& a, const Vec2& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  if (pts.size() < 3) return pts;
  std::vector<Vec2> hull(2 * pts.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    while (k >= 2 && cross2(hull[k - 1] - hull[k - 2], pts[i] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i];
  }
  for (std::size_t i = pts.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross2(hull[k - 1] - hull[k - 2], pts[i - 1] - hull[k - 2]) <= 0.0) --k;
    hull[k++] = pts[i - 1];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

inline ObjectClass classify_by_size(const Eigen::Vector3d& size, const DetectorConfig& cfg) {
  for (const auto& p : cfg.priors) {
    if (p.length.contains(size.x()) && p.width.contains(size.y()) && p.height.contains(size.z())) {
      return p.class_label;
    }
  }
  return size.x() * size.y() < 1.0 ? ObjectClass::kPedestrian : ObjectClass::kCar;
}

/// Minimum-area BEV rectangle over the convex hull (one candidate per hull
/// edge). Length is the longer side and the yaw follows it, in (-pi/2, pi/2].
inline Box3D fit_oriented_box(const PointCloud& cluster, const DetectorConfig& cfg = DetectorConfig{}) {
  if (cluster.size() < 3) throw Error(ErrorKind::kDegenerate, "need at least 3 points");
  std::vector<Vec2> bev;
  bev.reserve(cluster.size());
  double zmin = std::numeric_limits<double>::infinity(), zmax = -zmin;
  for (const auto& p : cluster.points) {
    bev.emplace_back(p.x(), p.y());
    zmin = std::min(zmin, p.z());
    zmax = std::max(zmax, p.z());
  }
  const auto hull = detail::convex_hull(bev);
  if (hull.size() < 3 || detail::polygon_area(hull) < 1e-9) {
    throw Error(ErrorKind::kDegenerate, "cluster is collinear in the ground plane");
  }
  double best_area = std::numeric_limits<double>::infinity();
  double best_angle = 0.0;
  Vec2 best_lo, best_hi;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Vec2 e = hull[(i + 1) % hull.size()] - hull[i];
    const double angle = std::atan2(e.y(), e.x());
    const Vec2 ax(std::cos(angle), std::sin(angle)), ay(-std::sin(angle), std::cos(angle));
    Vec2 lo(std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    Vec2 hi = -lo;
    for (const auto& q : hull) {
      const Vec2 local(q.dot(ax), q.dot(ay));
      lo = lo.cwiseMin(local);
      hi = hi.cwiseMax(local);
    }
    const double area = (hi.x() - lo.x()) * (hi.y() - lo.y());
    if (area < best_area) {
      best_area = area;
      best_angle = angle;
      best_lo = lo;
      best_hi = hi;
    }
  }
  const Vec2 ax(std::cos(best_angle), std::sin(best_angle)), ay(-std::sin(best_angle), std::cos(best_angle));
  const Vec2 mid = (best_lo + best_hi) / 2.0;
  const Vec2 ctr = mid.x() * ax + mid.y() * ay;
  double ext_a = best_hi.x() - best_lo.x();
  double ext_b = best_hi.y() - best_lo.y();
  double yaw = best_angle;
  if (ext_b > ext_a) {
    std::swap(ext_a, ext_b);
    yaw += kPi / 2.0;
  }
  Box3D box;
  box.yaw = normalize_half_angle(yaw);
  box.center = Point3(ctr.x(), ctr.y(), (zmin + zmax) / 2.0);
  box.size = Eigen::Vector3d(std::max(ext_a, 1e-3), std::max(ext_b, 1e-3), std::max(zmax - zmin, 1e-3));
  box.class_label = classify_by_size(box.size, cfg);
  box.score = std::clamp(static_cast<double>(cluster.size()) / 200.0, 0.05, 1.0);
  return box;
}

struct DetectionResult {
  std::vector<Box3D> boxes;
  bool no_plane = false;  // ground not found; boxes is empty
};

/// Ground removal, clustering and box fitting. Box bottoms are extended
/// down to the fitted ground plane; structure-sized clusters are skipped.
inline DetectionResult detect_frame(const PointCloud& cloud, const DetectorConfig& cfg) {
  DetectionResult result;
  if (cloud.empty()) return result;
  GroundSplit split;
  try {
    split = remove_ground(cloud, cfg);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kNoPlane) throw;
    result.no_plane = true;
    return result;
  }
  for (const auto& cluster : cluster_euclidean(split.non_ground, cfg)) {
    Box3D box;
    try {
      box = fit_oriented_box(cluster, cfg);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kDegenerate) throw;
      continue;
    }
    const double ground_z = split.plane.height_at(box.center.x(), box.center.y());
    const double top = box.z_max();
    if (top > ground_z) {
      box.size.z() = top - ground_z;
      box.center.z() = (top + ground_z) / 2.0;
    }
    if (box.size.x() > cfg.max_object_length || box.size.z() > cfg.max_object_height) continue;
    box.class_label = classify_by_size(box.size, cfg);
    result.boxes.push_back(box);
  }
  return result;
}

}  // namespace mvlk

#endif  // MVLK_DETECTOR_HPP
