/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Core value types (points, clouds, rigid transforms, oriented boxes,
 * pinhole cameras) and the geometric kernels shared by the other modules.
 */

#ifndef MVLK_GEOMETRY_HPP
#define MVLK_GEOMETRY_HPP

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mvlk/error.hpp"

namespace mvlk {

using Point3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

inline constexpr double kPi = std::numbers::pi;

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double a) {
  double r = std::remainder(a, 2.0 * kPi);
  if (r <= -kPi) r += 2.0 * kPi;
  return r;
}

/// Wraps an angle into (-pi/2, pi/2]; used where a box heading is only
/// defined up to a half turn.
inline double normalize_half_angle(double a) {
  double r = std::remainder(a, kPi);
  if (r <= -kPi / 2.0) r += kPi;
  return r;
}

// ---------------------------------------------------------------------------
// Point clouds
// ---------------------------------------------------------------------------

/// A frame of points. Optional per-point attributes are either empty or
/// exactly as long as `points`.
struct PointCloud {
  std::vector<Point3> points;
  std::vector<double> intensity;
  std::int64_t timestamp_ns = 0;
  std::vector<std::uint16_t> time_index;
  std::vector<std::uint16_t> point_source;
  std::optional<std::uint16_t> source_node;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_intensity() const { return !intensity.empty(); }
  bool has_time_index() const { return !time_index.empty(); }
  bool has_point_source() const { return !point_source.empty(); }

  bool valid() const {
    const auto n = points.size();
    if (timestamp_ns < 0) return false;
    if (!intensity.empty() && intensity.size() != n) return false;
    if (!time_index.empty() && time_index.size() != n) return false;
    if (!point_source.empty() && point_source.size() != n) return false;
    return std::all_of(points.begin(), points.end(),
                       [](const Point3& p) { return p.allFinite(); });
  }

  /// Copies point `i` with its attributes onto the end of `out`.
  void copy_point_to(std::size_t i, PointCloud& out) const {
    out.points.push_back(points[i]);
    if (has_intensity()) out.intensity.push_back(intensity[i]);
    if (has_time_index()) out.time_index.push_back(time_index[i]);
    if (has_point_source()) out.point_source.push_back(point_source[i]);
  }

  /// Empty cloud with the same frame metadata.
  PointCloud empty_like() const {
    PointCloud out;
    out.timestamp_ns = timestamp_ns;
    out.source_node = source_node;
    return out;
  }

  PointCloud subset(std::span<const std::size_t> indices) const {
    PointCloud out = empty_like();
    out.points.reserve(indices.size());
    for (auto i : indices) copy_point_to(i, out);
    return out;
  }
};

// ---------------------------------------------------------------------------
// Rigid transforms
// ---------------------------------------------------------------------------

/// Proper rigid motion p -> rotation * p + translation.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }

  static RigidTransform from(const Eigen::Matrix3d& r, const Eigen::Vector3d& t) {
    RigidTransform out;
    out.rotation = r;
    out.translation = t;
    return out;
  }

  /// Z-Y-X (yaw, pitch, roll) Euler construction.
  static RigidTransform from_euler(double yaw, double pitch, double roll,
                                   const Eigen::Vector3d& t) {
    Eigen::Matrix3d r =
        (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
         Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
         Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
            .toRotationMatrix();
    return from(r, t);
  }

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  Point3 operator()(const Point3& p) const { return apply(p); }

  RigidTransform inverse() const {
    RigidTransform out;
    out.rotation = rotation.transpose();
    out.translation = -(out.rotation * translation);
    return out;
  }

  Eigen::Matrix4d matrix() const {
    Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
    m.topLeftCorner<3, 3>() = rotation;
    m.topRightCorner<3, 1>() = translation;
    return m;
  }

  /// Rotation about +z that best matches this transform's heading change.
  double yaw() const { return std::atan2(rotation(1, 0), rotation(0, 0)); }

  bool valid(double tol = 1e-9) const {
    if (!rotation.allFinite() || !translation.allFinite()) return false;
    const Eigen::Matrix3d gram = rotation.transpose() * rotation;
    return (gram - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() <= tol &&
           std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// (a o b)(p) = a(b(p)).
inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

inline RigidTransform inverse(const RigidTransform& t) { return t.inverse(); }

/// Geodesic rotation angle between two transforms, radians.
inline double rotation_error(const RigidTransform& a, const RigidTransform& b) {
  const Eigen::Matrix3d d = a.rotation.transpose() * b.rotation;
  const double c = std::clamp((d.trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

inline double translation_error(const RigidTransform& a, const RigidTransform& b) {
  return (a.translation - b.translation).norm();
}

inline PointCloud apply_transform(const RigidTransform& t, const PointCloud& cloud) {
  PointCloud out = cloud;
  for (auto& p : out.points) p = t.apply(p);
  return out;
}

// ---------------------------------------------------------------------------
// Oriented boxes
// ---------------------------------------------------------------------------

enum class ObjectClass { kCar = 0, kCyclist = 1, kPedestrian = 2 };

inline constexpr std::array<ObjectClass, 3> kAllClasses = {
    ObjectClass::kCar, ObjectClass::kCyclist, ObjectClass::kPedestrian};

inline const char* to_string(ObjectClass c) {
  switch (c) {
    case ObjectClass::kCar: return "Car";
    case ObjectClass::kCyclist: return "Cyclist";
    case ObjectClass::kPedestrian: return "Pedestrian";
  }
  return "?";
}

inline std::optional<ObjectClass> parse_class(std::string_view s) {
  if (s == "Car") return ObjectClass::kCar;
  if (s == "Cyclist") return ObjectClass::kCyclist;
  if (s == "Pedestrian") return ObjectClass::kPedestrian;
  return std::nullopt;
}

/// Yaw-only oriented box. `center` is the geometric center; `size` is
/// (length along heading, width, height).
struct Box3D {
  Point3 center = Point3::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
  ObjectClass class_label = ObjectClass::kCar;
  double score = 1.0;
  std::optional<std::int64_t> track_id;

  double volume() const { return size.x() * size.y() * size.z(); }
  double z_min() const { return center.z() - size.z() / 2.0; }
  double z_max() const { return center.z() + size.z() / 2.0; }

  bool valid() const {
    return center.allFinite() && size.allFinite() && (size.array() > 0.0).all() &&
           std::isfinite(yaw) && yaw > -kPi && yaw <= kPi && score >= 0.0 &&
           score <= 1.0;
  }

  /// Ground-plane footprint corners, counter-clockwise.
  std::array<Vec2, 4> bev_corners() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Vec2 ax(c, s), ay(-s, c);
    const Vec2 ctr(center.x(), center.y());
    const double hl = size.x() / 2.0, hw = size.y() / 2.0;
    return {ctr + hl * ax + hw * ay * -1.0, ctr + hl * ax + hw * ay,
            ctr - hl * ax + hw * ay, ctr - hl * ax - hw * ay};
  }

  /// True if `p` lies inside the box, optionally grown by `margin`.
  bool contains(const Point3& p, double margin = 0.0) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const double dx = p.x() - center.x(), dy = p.y() - center.y();
    const double lx = c * dx + s * dy, ly = -s * dx + c * dy;
    return std::abs(lx) <= size.x() / 2.0 + margin &&
           std::abs(ly) <= size.y() / 2.0 + margin &&
           std::abs(p.z() - center.z()) <= size.z() / 2.0 + margin;
  }
};

/// Moves a box by a rigid transform, keeping it yaw-only (roll and pitch of
/// the transform are dropped from the heading).
inline Box3D transform_box(const RigidTransform& t, const Box3D& b) {
  Box3D out = b;
  out.center = t.apply(b.center);
  const Eigen::Vector3d heading = t.rotation * Eigen::Vector3d(std::cos(b.yaw), std::sin(b.yaw), 0.0);
  out.yaw = normalize_angle(std::atan2(heading.y(), heading.x()));
  return out;
}

namespace detail {

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

inline double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  }
  return 0.5 * std::abs(a);
}

/// Sutherland-Hodgman: clips `subject` by the convex CCW polygon `clip`.
inline std::vector<Vec2> clip_convex(std::vector<Vec2> subject, std::span<const Vec2> clip) {
  for (std::size_t e = 0; e < clip.size() && !subject.empty(); ++e) {
    const Vec2 a = clip[e];
    const Vec2 b = clip[(e + 1) % clip.size()];
    const Vec2 edge = b - a;
    auto side = [&](const Vec2& p) { return cross2(edge, p - a); };
    std::vector<Vec2> out;
    out.reserve(subject.size() + 4);
    for (std::size_t i = 0; i < subject.size(); ++i) {
      const Vec2 cur = subject[i];
      const Vec2 prev = subject[(i + subject.size() - 1) % subject.size()];
      const double sc = side(cur), sp = side(prev);
      if (sc >= 0.0) {
        if (sp < 0.0) out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
        out.push_back(cur);
      } else if (sp >= 0.0) {
        out.push_back(prev + (cur - prev) * (sp / (sp - sc)));
      }
    }
    subject = std::move(out);
  }
  return subject;
}

inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = a.bev_corners();
  const auto cb = b.bev_corners();
  const auto poly = clip_convex(std::vector<Vec2>(ca.begin(), ca.end()), cb);
  const double area = polygon_area(poly);
  return area > 0.0 ? area : 0.0;
}

}  // namespace detail

/// Intersection-over-union of the ground-plane footprints.
inline double iou_bev(const Box3D& a, const Box3D& b) {
  const double inter = detail::bev_intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.size.x() * a.size.y() + b.size.x() * b.size.y() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

/// Volumetric IoU: footprint intersection times vertical overlap.
inline double iou_3d(const Box3D& a, const Box3D& b) {
  const double dz = std::min(a.z_max(), b.z_max()) - std::max(a.z_min(), b.z_min());
  if (dz <= 0.0) return 0.0;
  const double inter = detail::bev_intersection_area(a, b) * dz;
  if (inter <= 0.0) return 0.0;
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

enum class OverlapMetric { kIou3d, kIouBev };

inline double overlap(OverlapMetric m, const Box3D& a, const Box3D& b) {
  return m == OverlapMetric::kIou3d ? iou_3d(a, b) : iou_bev(a, b);
}

// ---------------------------------------------------------------------------
// Pinhole camera
// ---------------------------------------------------------------------------

struct PinholeCamera {
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  RigidTransform extrinsic;  // world -> camera

  bool valid() const { return fx > 0.0 && fy > 0.0 && extrinsic.valid(1e-6); }
};

/// Pixel of a world point, or nullopt when the point is behind the camera.
inline std::optional<Vec2> project_pinhole(const PinholeCamera& cam, const Point3& p) {
  const Point3 q = cam.extrinsic.apply(p);
  if (q.z() <= 1e-9) return std::nullopt;
  return Vec2(cam.fx * q.x() / q.z() + cam.cx, cam.fy * q.y() / q.z() + cam.cy);
}

// ---------------------------------------------------------------------------
// Voxel grid
// ---------------------------------------------------------------------------

using VoxelKey = std::array<std::int64_t, 3>;

inline VoxelKey voxel_key(const Point3& p, double voxel_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.y() / voxel_size)),
          static_cast<std::int64_t>(std::floor(p.z() / voxel_size))};
}

/// One centroid per occupied voxel, emitted in sorted key order. Members of
/// a voxel are summed in lexicographic point order so the result does not
/// depend on input order. Intensity is averaged; time index and point
/// source take the member minimum.
inline PointCloud voxel_downsample(const PointCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) {
    throw Error(ErrorKind::kConfigInvalid, "voxel_size must be positive");
  }
  const std::size_t n = cloud.size();
  std::vector<VoxelKey> keys(n);
  for (std::size_t i = 0; i < n; ++i) keys[i] = voxel_key(cloud.points[i], voxel_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (keys[a] != keys[b]) return keys[a] < keys[b];
    const auto& pa = cloud.points[a];
    const auto& pb = cloud.points[b];
    if (pa.x() != pb.x()) return pa.x() < pb.x();
    if (pa.y() != pb.y()) return pa.y() < pb.y();
    if (pa.z() != pb.z()) return pa.z() < pb.z();
    if (cloud.has_intensity() && cloud.intensity[a] != cloud.intensity[b]) {
      return cloud.intensity[a] < cloud.intensity[b];
    }
    return false;
  });

  PointCloud out = cloud.empty_like();
  for (std::size_t begin = 0; begin < n;) {
    std::size_t end = begin + 1;
    while (end < n && keys[order[end]] == keys[order[begin]]) ++end;
    Point3 sum = Point3::Zero();
    double isum = 0.0;
    std::uint16_t tmin = UINT16_MAX, smin = UINT16_MAX;
    for (std::size_t k = begin; k < end; ++k) {
      const std::size_t i = order[k];
      sum += cloud.points[i];
      if (cloud.has_intensity()) isum += cloud.intensity[i];
      if (cloud.has_time_index()) tmin = std::min(tmin, cloud.time_index[i]);
      if (cloud.has_point_source()) smin = std::min(smin, cloud.point_source[i]);
    }
    const double count = static_cast<double>(end - begin);
    out.points.push_back(sum / count);
    if (cloud.has_intensity()) out.intensity.push_back(isum / count);
    if (cloud.has_time_index()) out.time_index.push_back(tmin);
    if (cloud.has_point_source()) out.point_source.push_back(smin);
    begin = end;
  }
  return out;
}

}  // namespace mvlk

#endif  // MVLK_GEOMETRY_HPP
