/*
 * mvlk - multi-view LiDAR toolkit
 *
 * Synthetic scene generator. Ray-casts solid-state LiDAR frames (100 x 40
 * degree field of view, non-repetitive random pattern) from several nodes
 * into a crossroad of static boxes and constant-velocity objects, and
 * returns the exact ground truth: extrinsics, boxes, trajectories, a dense
 * reference scan of the static scene, and reference corners.
 */

#ifndef MVLK_SCENE_HPP
#define MVLK_SCENE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <vector>

#include "mvlk/error.hpp"
#include "mvlk/geometry.hpp"
#include "mvlk/tracking.hpp"

namespace mvlk {

struct StaticBox {
  Point3 center = Point3::Zero();  // geometric center
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  double yaw = 0.0;
};

struct SceneObject {
  ObjectClass class_label = ObjectClass::kPedestrian;
  Eigen::Vector3d size = Eigen::Vector3d(0.6, 0.6, 1.75);
  Vec2 start = Vec2::Zero();     // ground-plane center at t = 0
  Vec2 velocity = Vec2::Zero();  // m/s
  double yaw = 0.0;              // used when stationary
  int first_frame = 0;
  int last_frame = std::numeric_limits<int>::max();
};

struct LidarModel {
  double fov_horizontal_deg = 100.0;
  double fov_vertical_deg = 40.0;
  int points_per_frame = 8000;
  double max_range = 100.0;
  double noise_sigma = 0.02;
};

struct SceneSpec {
  double half_extent = 25.0;  // ground spans [-h, h]^2
  std::vector<StaticBox> static_boxes;
  std::vector<RigidTransform> node_poses;  // node -> world
  std::vector<SceneObject> objects;
  LidarModel lidar;
  int frame_count = 1;
  double frame_dt = 0.1;
  std::int64_t start_time_ns = 0;
  double reference_density = 16.0;  // points per square metre
  int corner_count = 20;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(half_extent > 0.0) || node_poses.empty() || frame_count < 1 || !(frame_dt > 0.0) ||
        lidar.points_per_frame < 0 || !(lidar.max_range > 0.0) || lidar.noise_sigma < 0.0 ||
        !(lidar.fov_horizontal_deg > 0.0 && lidar.fov_horizontal_deg <= 360.0) ||
        !(lidar.fov_vertical_deg > 0.0 && lidar.fov_vertical_deg < 180.0) ||
        reference_density < 0.0 || start_time_ns < 0) {
      throw Error(ErrorKind::kSpecInvalid, "scene spec out of range");
    }
    for (const auto& p : node_poses) {
      if (!p.valid(1e-6)) throw Error(ErrorKind::kSpecInvalid, "node pose is not a rigid transform");
    }
    for (const auto& b : static_boxes) {
      if (!(b.size.array() > 0.0).all()) throw Error(ErrorKind::kSpecInvalid, "static box size");
    }
    for (const auto& o : objects) {
      if (!(o.size.array() > 0.0).all()) throw Error(ErrorKind::kSpecInvalid, "object size");
    }
  }
};

struct SyntheticScene {
  /// frames[node][frame], node frame coordinates, source_node set.
  std::vector<std::vector<PointCloud>> frames;
  /// Ground-truth boxes per frame (world frame, track_id = object index).
  std::vector<std::vector<Box3D>> boxes;
  std::vector<RigidTransform> extrinsics;
  TrajectorySet trajectories;
  PointCloud reference;        // world frame static scene
  std::vector<Point3> corners;  // world frame static corners
  /// visible[node][frame][object] = number of returned points on the object.
  std::vector<std::vector<std::vector<int>>> visible;
};

/// Object box at frame `k`, or nullopt when the object is absent.
inline std::optional<Box3D> object_box(const SceneObject& o, int k, double frame_dt,
                                       std::int64_t id) {
  if (k < o.first_frame || k > o.last_frame) return std::nullopt;
  const double t = k * frame_dt;
  Box3D b;
  b.center = Point3(o.start.x() + o.velocity.x() * t, o.start.y() + o.velocity.y() * t,
                    o.size.z() / 2.0);
  b.size = o.size;
  b.yaw = o.velocity.norm() > 1e-9 ? normalize_angle(std::atan2(o.velocity.y(), o.velocity.x()))
                                   : normalize_angle(o.yaw);
  b.class_label = o.class_label;
  b.score = 1.0;
  b.track_id = id;
  return b;
}

namespace detail {

/// Ray / yaw-box slab test. Returns the entry distance when the ray hits.
inline std::optional<double> ray_box(const Point3& origin, const Eigen::Vector3d& dir,
                                     const Point3& center, const Eigen::Vector3d& size, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const Eigen::Vector3d o = origin - center;
  const Eigen::Vector3d lo(c * o.x() + s * o.y(), -s * o.x() + c * o.y(), o.z());
  const Eigen::Vector3d ld(c * dir.x() + s * dir.y(), -s * dir.x() + c * dir.y(), dir.z());
  double t0 = 0.0, t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double h = size[a] / 2.0;
    if (std::abs(ld[a]) < 1e-15) {
      if (lo[a] < -h || lo[a] > h) return std::nullopt;
      continue;
    }
    double ta = (-h - lo[a]) / ld[a];
    double tb = (h - lo[a]) / ld[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (t0 <= 1e-9) return std::nullopt;  // origin inside or touching
  return t0;
}

}  // namespace detail

/// Ray-casting scene model at a fixed frame.
class SceneRaycaster {
 public:
  /// Hit with the index of the surface: -1 ground, [0, S) static box,
  /// S + i dynamic object i.
  struct Hit {
    double range = 0.0;
    int surface = -1;
  };

  SceneRaycaster(const SceneSpec& spec, std::span<const std::optional<Box3D>> objects)
      : spec_(spec), objects_(objects.begin(), objects.end()) {}

  std::optional<Hit> cast(const Point3& origin, const Eigen::Vector3d& dir) const {
    std::optional<Hit> best;
    auto offer = [&](double t, int surface) {
      if (t <= spec_.lidar.max_range && (!best || t < best->range)) best = Hit{t, surface};
    };
    if (dir.z() < -1e-12 && origin.z() > 0.0) {
      const double t = -origin.z() / dir.z();
      const Point3 p = origin + t * dir;
      if (std::abs(p.x()) <= spec_.half_extent && std::abs(p.y()) <= spec_.half_extent) offer(t, -1);
    }
    const int s = static_cast<int>(spec_.static_boxes.size());
    for (int i = 0; i < s; ++i) {
      const auto& b = spec_.static_boxes[i];
      if (auto t = detail::ray_box(origin, dir, b.center, b.size, b.yaw)) offer(*t, i);
    }
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (!objects_[i]) continue;
      const auto& b = *objects_[i];
      if (auto t = detail::ray_box(origin, dir, b.center, b.size, b.yaw)) offer(*t, s + static_cast<int>(i));
    }
    return best;
  }

 private:
  const SceneSpec& spec_;
  std::vector<std::optional<Box3D>> objects_;
};

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
  auto split = [](std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
  };
  return split(split(split(a) ^ b) ^ c);
}

/// Uniform surface samples of the static scene (ground outside box
/// footprints plus every box side and top).
inline PointCloud sample_static_surfaces(const SceneSpec& spec, std::mt19937_64& rng) {
  PointCloud out;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto inside_any = [&](const Point3& p) {
    for (const auto& b : spec.static_boxes) {
      Box3D bb;
      bb.center = b.center;
      bb.size = b.size;
      bb.yaw = b.yaw;
      if (bb.contains(p, 1e-6)) return true;
    }
    return false;
  };
  auto poisson_count = [&](double area) {
    std::poisson_distribution<int> d(std::max(area * spec.reference_density, 1e-9));
    return d(rng);
  };
  const double h = spec.half_extent;
  const int ng = poisson_count(4.0 * h * h);
  for (int i = 0; i < ng; ++i) {
    const Point3 p((2.0 * u(rng) - 1.0) * h, (2.0 * u(rng) - 1.0) * h, 0.0);
    if (!inside_any(p + Point3(0, 0, 1e-3))) out.points.push_back(p);
  }
  for (const auto& b : spec.static_boxes) {
    const double c = std::cos(b.yaw), s = std::sin(b.yaw);
    const Eigen::Vector3d ax(c, s, 0), ay(-s, c, 0), az(0, 0, 1);
    const Eigen::Vector3d hs = b.size / 2.0;
    // (normal axis, sign, tangent axes extents)
    struct Face { Eigen::Vector3d n, t1, t2; double e1, e2, d; };
    const Face faces[5] = {
        {ax, ay, az, hs.y(), hs.z(), hs.x()},  {-ax, ay, az, hs.y(), hs.z(), hs.x()},
        {ay, ax, az, hs.x(), hs.z(), hs.y()},  {-ay, ax, az, hs.x(), hs.z(), hs.y()},
        {az, ax, ay, hs.x(), hs.y(), hs.z()}};
    for (const auto& f : faces) {
      const int n = poisson_count(4.0 * f.e1 * f.e2);
      for (int i = 0; i < n; ++i) {
        const Point3 p = b.center + f.n * f.d + f.t1 * (2.0 * u(rng) - 1.0) * f.e1 +
                         f.t2 * (2.0 * u(rng) - 1.0) * f.e2;
        if (p.z() < 0.0) continue;
        bool covered = false;
        for (const auto& o : spec.static_boxes) {
          if (&o == &b) continue;
          Box3D bb;
          bb.center = o.center;
          bb.size = o.size;
          bb.yaw = o.yaw;
          if (bb.contains(p, -1e-6)) {
            covered = true;
            break;
          }
        }
        if (!covered) out.points.push_back(p);
      }
    }
  }
  return out;
}

}  // namespace detail

/// Generates every per-node frame and the ground truth. Deterministic in
/// `spec.seed`.
inline SyntheticScene generate_synthetic_scene(const SceneSpec& spec) {
  spec.validate();
  SyntheticScene scene;
  const int nodes = static_cast<int>(spec.node_poses.size());
  const int objects = static_cast<int>(spec.objects.size());
  const int statics = static_cast<int>(spec.static_boxes.size());
  scene.extrinsics = spec.node_poses;
  scene.frames.assign(nodes, std::vector<PointCloud>(spec.frame_count));
  scene.visible.assign(nodes, std::vector<std::vector<int>>(spec.frame_count, std::vector<int>(objects, 0)));
  scene.boxes.assign(spec.frame_count, {});

  const double hfov = spec.lidar.fov_horizontal_deg * kPi / 180.0;
  const double vfov = spec.lidar.fov_vertical_deg * kPi / 180.0;
  const auto frame_ns = static_cast<std::int64_t>(std::llround(spec.frame_dt * 1e9));

  for (int k = 0; k < spec.frame_count; ++k) {
    std::vector<std::optional<Box3D>> boxes(objects);
    for (int i = 0; i < objects; ++i) {
      boxes[i] = object_box(spec.objects[i], k, spec.frame_dt, i);
      if (boxes[i]) {
        scene.boxes[k].push_back(*boxes[i]);
        scene.trajectories[i].push_back({k, *boxes[i]});
      }
    }
    const SceneRaycaster caster(spec, boxes);
    for (int n = 0; n < nodes; ++n) {
      const RigidTransform& pose = spec.node_poses[n];
      const RigidTransform inv = pose.inverse();
      std::mt19937_64 rng(detail::mix_seed(spec.seed, static_cast<std::uint64_t>(n) + 1,
                                           static_cast<std::uint64_t>(k) + 1));
      std::uniform_real_distribution<double> u(0.0, 1.0);
      std::normal_distribution<double> noise(0.0, 1.0);
      PointCloud& frame = scene.frames[n][k];
      frame.timestamp_ns = spec.start_time_ns + k * frame_ns;
      frame.source_node = static_cast<std::uint16_t>(n);
      frame.points.reserve(spec.lidar.points_per_frame);
      const double sin_lo = std::sin(-vfov / 2.0), sin_hi = std::sin(vfov / 2.0);
      for (int r = 0; r < spec.lidar.points_per_frame; ++r) {
        const double az = (u(rng) - 0.5) * hfov;
        const double el = std::asin(sin_lo + (sin_hi - sin_lo) * u(rng));
        const Eigen::Vector3d local(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
        const Eigen::Vector3d dir = pose.rotation * local;
        const Eigen::Vector3d jitter(noise(rng), noise(rng), noise(rng));
        const auto hit = caster.cast(pose.translation, dir);
        if (!hit) continue;
        const Point3 world = pose.translation + hit->range * dir + spec.lidar.noise_sigma * jitter;
        frame.points.push_back(inv.apply(world));
        frame.intensity.push_back(hit->surface < 0 ? 0.2 : (hit->surface < statics ? 0.5 : 0.8));
        if (hit->surface >= statics) ++scene.visible[n][k][hit->surface - statics];
      }
    }
  }

  std::mt19937_64 ref_rng(detail::mix_seed(spec.seed, 0xC0FFEEull));
  scene.reference = detail::sample_static_surfaces(spec, ref_rng);

  // Top corners of static boxes, visited round-robin so they spread over
  // the scene.
  std::vector<Point3> all_corners;
  for (int c = 0; c < 4; ++c) {
    for (const auto& b : spec.static_boxes) {
      Box3D bb;
      bb.center = b.center;
      bb.size = b.size;
      bb.yaw = b.yaw;
      const auto bev = bb.bev_corners();
      all_corners.emplace_back(bev[c].x(), bev[c].y(), bb.z_max());
    }
  }
  for (std::size_t i = 0; i < all_corners.size() && static_cast<int>(scene.corners.size()) < spec.corner_count; ++i) {
    scene.corners.push_back(all_corners[i]);
  }
  return scene;
}

// ---------------------------------------------------------------------------
// Canned layouts
// ---------------------------------------------------------------------------

/// Node pose looking from `position` toward `target`, with a small roll.
inline RigidTransform look_at_pose(const Point3& position, const Point3& target, double roll = 0.0) {
  const Eigen::Vector3d d = target - position;
  const double yaw = std::atan2(d.y(), d.x());
  const double pitch = -std::atan2(d.z(), std::hypot(d.x(), d.y()));
  return RigidTransform::from_euler(yaw, pitch, roll, position);
}

/// Four corner building blocks around a crossroad plus random street
/// furniture. The furniture breaks the 90-degree symmetry of the blocks.
inline std::vector<StaticBox> crossroad_structures(std::mt19937_64& rng, double half_extent,
                                                   double road_half_width, int clutter) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<StaticBox> out;
  const double inner = road_half_width + 3.0;
  for (int sx : {-1, 1}) {
    for (int sy : {-1, 1}) {
      StaticBox b;
      const double ix = inner + 3.0 * u(rng);
      const double iy = inner + 3.0 * u(rng);
      const double lx = (half_extent - ix) * (0.55 + 0.45 * u(rng));
      const double ly = (half_extent - iy) * (0.55 + 0.45 * u(rng));
      const double h = 4.0 + 14.0 * u(rng);
      b.size = Eigen::Vector3d(lx, ly, h);
      b.center = Point3(sx * (ix + lx / 2.0), sy * (iy + ly / 2.0), h / 2.0);
      out.push_back(b);
    }
  }
  for (int i = 0; i < clutter; ++i) {
    StaticBox b;
    const bool pole = u(rng) < 0.3;
    if (pole) {
      b.size = Eigen::Vector3d(0.3, 0.3, 3.0 + 3.0 * u(rng));
    } else {
      b.size = Eigen::Vector3d(0.8 + 2.5 * u(rng), 0.6 + 1.5 * u(rng), 0.8 + 2.2 * u(rng));
    }
    // Sidewalk band between the road edge and the buildings.
    const double along = (2.0 * u(rng) - 1.0) * (half_extent - 2.0);
    const double across = road_half_width + 0.5 + (inner - road_half_width - 1.0) * u(rng);
    const double side = u(rng) < 0.5 ? -1.0 : 1.0;
    const bool on_x = u(rng) < 0.5;
    if (std::abs(along) < inner) {
      // Avoid the junction itself; place on the corner plaza instead.
      b.center = Point3(side * (road_half_width + 1.5 + u(rng)), (on_x ? 1 : -1) * (road_half_width + 1.5 + u(rng)), 0.0);
    } else if (on_x) {
      b.center = Point3(along, side * across, 0.0);
    } else {
      b.center = Point3(side * across, along, 0.0);
    }
    b.center.z() = b.size.z() / 2.0;
    b.yaw = normalize_angle(kPi * (2.0 * u(rng) - 1.0));
    out.push_back(b);
  }
  return out;
}

/// Four nodes at the junction corners, 3 m up, looking at the center.
inline std::vector<RigidTransform> crossroad_nodes(double offset = 11.0, double height = 3.0) {
  std::vector<RigidTransform> nodes;
  const Point3 look(0.0, 0.0, 0.0);
  for (auto [x, y] : {std::pair{-1, -1}, std::pair{1, -1}, std::pair{1, 1}, std::pair{-1, 1}}) {
    nodes.push_back(look_at_pose(Point3(x * offset, y * offset, height), look));
  }
  return nodes;
}

/// Calibration scene: static crossroad, one node at a random pose within
/// 30 m of the origin looking roughly at the junction.
inline SceneSpec calibration_scene(std::uint64_t seed, int nodes = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  spec.static_boxes = crossroad_structures(rng, spec.half_extent, 7.0, 40);
  spec.reference_density = 400.0;
  for (int n = 0; n < nodes; ++n) {
    const double angle = 2.0 * kPi * u(rng);
    const double radius = 6.0 + 8.0 * u(rng);
    const Point3 pos(radius * std::cos(angle), radius * std::sin(angle), 2.0 + 2.0 * u(rng));
    const Point3 target((2.0 * u(rng) - 1.0) * 4.0, (2.0 * u(rng) - 1.0) * 4.0, 1.0);
    RigidTransform pose = look_at_pose(pos, target, (2.0 * u(rng) - 1.0) * 0.05);
    // Yaw perturbation so the node does not always face the junction squarely.
    const double dyaw = (2.0 * u(rng) - 1.0) * 0.4;
    pose.rotation = Eigen::AngleAxisd(dyaw, Eigen::Vector3d::UnitZ()).toRotationMatrix() * pose.rotation;
    spec.node_poses.push_back(pose);
  }
  spec.lidar.points_per_frame = 360;
  spec.frame_count = 100;
  return spec;
}

/// Standard crossroad: corner buildings, sidewalk clutter, parked cars and
/// moving traffic seen by four corner nodes. Moving objects are kept inside
/// the ground area for the whole sequence.
inline SceneSpec crossroad_scene(std::uint64_t seed, int frame_count = 40, int points_per_frame = 8000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  spec.frame_count = frame_count;
  spec.lidar.points_per_frame = points_per_frame;
  const double road = 7.0;
  spec.static_boxes = crossroad_structures(rng, spec.half_extent, road, 12);
  spec.node_poses = crossroad_nodes();
  // No clutter right in front of a sensor.
  std::erase_if(spec.static_boxes, [&](const StaticBox& b) {
    return std::any_of(spec.node_poses.begin(), spec.node_poses.end(), [&](const RigidTransform& n) {
      return std::hypot(b.center.x() - n.translation.x(), b.center.y() - n.translation.y()) < 3.0;
    });
  });
  const double duration = frame_count * spec.frame_dt;
  const double limit = 16.0;  // moving objects stay in the monitored area

  // Moving object along one road axis, entering from a random side.
  auto mover = [&](ObjectClass c, Eigen::Vector3d size, double lane, double speed) {
    SceneObject o;
    o.class_label = c;
    o.size = size;
    const bool along_x = u(rng) < 0.5;
    const double dir = u(rng) < 0.5 ? -1.0 : 1.0;
    const double travel = std::min(speed * duration, 2.0 * limit);
    const double start = -dir * (travel / 2.0) + (2.0 * u(rng) - 1.0) * (limit - travel / 2.0);
    const double side = dir * lane;  // keep right
    o.start = along_x ? Vec2(start, -side) : Vec2(side, start);
    o.velocity = along_x ? Vec2(dir * speed, 0.0) : Vec2(0.0, dir * speed);
    return o;
  };
  for (int i = 0; i < 4; ++i) {
    spec.objects.push_back(mover(ObjectClass::kCar, {4.2 + 0.8 * u(rng), 1.8 + 0.3 * u(rng), 1.5 + 0.3 * u(rng)},
                                 1.5 + 2.5 * u(rng), 4.0 + 5.0 * u(rng)));
  }
  for (int i = 0; i < 3; ++i) {
    spec.objects.push_back(mover(ObjectClass::kCyclist, {1.7 + 0.2 * u(rng), 0.6 + 0.2 * u(rng), 1.6 + 0.2 * u(rng)},
                                 road - 1.0 - 0.5 * u(rng), 3.0 + 2.0 * u(rng)));
  }
  for (int i = 0; i < 8; ++i) {
    spec.objects.push_back(mover(ObjectClass::kPedestrian, {0.5 + 0.2 * u(rng), 0.5 + 0.2 * u(rng), 1.6 + 0.3 * u(rng)},
                                 road + 0.5 + 1.5 * u(rng), 1.0 + 0.8 * u(rng)));
  }
  // Parked cars along the curb occlude the sidewalk and the far lane.
  for (int i = 0; i < 3; ++i) {
    SceneObject o;
    o.class_label = ObjectClass::kCar;
    o.size = {4.3 + 0.6 * u(rng), 1.8 + 0.2 * u(rng), 1.5 + 0.2 * u(rng)};
    const double along = (u(rng) < 0.5 ? -1.0 : 1.0) * (road + 3.0 + (limit - road - 3.0) * u(rng));
    const double side = (u(rng) < 0.5 ? -1.0 : 1.0) * (road - 1.3);
    if (u(rng) < 0.5) {
      o.start = Vec2(along, side);
      o.yaw = 0.0;
    } else {
      o.start = Vec2(side, along);
      o.yaw = kPi / 2.0;
    }
    spec.objects.push_back(o);
  }
  return spec;
}

/// Four pedestrians walking well apart from each other through the
/// crossroad, each along its own sidewalk, with the standard occluders.
inline SceneSpec walker_scene(std::uint64_t seed, int frame_count = 120, int points_per_frame = 4000) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SceneSpec spec;
  spec.seed = seed;
  spec.frame_count = frame_count;
  spec.lidar.points_per_frame = points_per_frame;
  const double road = 7.0;
  spec.static_boxes = crossroad_structures(rng, spec.half_extent, road, 12);
  spec.node_poses = crossroad_nodes();
  std::erase_if(spec.static_boxes, [&](const StaticBox& b) {
    return std::any_of(spec.node_poses.begin(), spec.node_poses.end(), [&](const RigidTransform& n) {
      return std::hypot(b.center.x() - n.translation.x(), b.center.y() - n.translation.y()) < 3.0;
    });
  });
  const double duration = frame_count * spec.frame_dt;
  // One walker per sidewalk side, each starting in a different quadrant.
  const std::array<Vec2, 4> dirs = {Vec2(1, 0), Vec2(0, 1), Vec2(-1, 0), Vec2(0, -1)};
  for (int i = 0; i < 4; ++i) {
    SceneObject o;
    o.class_label = ObjectClass::kPedestrian;
    o.size = {0.5 + 0.2 * u(rng), 0.5 + 0.2 * u(rng), 1.6 + 0.3 * u(rng)};
    const double speed = 1.0 + 0.6 * u(rng);
    const Vec2 d = dirs[i];
    const Vec2 normal(-d.y(), d.x());
    const double lane = road + 1.0 + 0.5 * u(rng);
    const double travel = speed * duration;
    o.start = -normal * lane - d * (travel / 2.0);
    o.velocity = d * speed;
    spec.objects.push_back(o);
  }
  return spec;
}

}  // namespace mvlk

#endif  // MVLK_SCENE_HPP
