#include <gtest/gtest.h>

#include <random>

#include "mvlk/registration.hpp"
#include "mvlk/scene.hpp"

using namespace mvlk;

namespace {

RigidTransform random_transform(std::mt19937_64& rng, double max_t = 30.0) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  q.normalize();
  return RigidTransform::from(q.toRotationMatrix(), Eigen::Vector3d(u(rng), u(rng), u(rng)) * max_t / std::sqrt(3.0));
}

PointCloud random_cloud(std::mt19937_64& rng, int n, double extent) {
  std::uniform_real_distribution<double> u(-extent, extent);
  PointCloud c;
  for (int i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

/// Surface samples of a few boxes on a plane: enough structure for ICP.
PointCloud structured_cloud(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  PointCloud c;
  for (int i = 0; i < n; ++i) {
    const int face = static_cast<int>(u(rng) * 4);
    const double a = u(rng), b = u(rng);
    switch (face) {
      case 0: c.points.emplace_back(20 * a - 10, 20 * b - 10, 0); break;  // ground
      case 1: c.points.emplace_back(-3 + 2 * a, 2, 3 * b); break;         // wall y = 2
      case 2: c.points.emplace_back(4, -5 + 6 * a, 4 * b); break;         // wall x = 4
      default: c.points.emplace_back(-6 + 3 * a, -4 + 2 * b, 2.5); break;  // roof
    }
  }
  return c;
}

}  // namespace

TEST(RegistrationProperty, ArunRecoversRandomTransforms) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const auto t = random_transform(rng);
    const auto src = random_cloud(rng, 50, 10.0);
    std::vector<Point3> dst;
    for (const auto& p : src.points) dst.push_back(t.apply(p));
    const auto est = solve_rigid_arun(src.points, dst);
    EXPECT_LT((est.rotation - t.rotation).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((est.translation - t.translation).norm(), 1e-9);
  }
}

TEST(Registration, ArunRejectsDegenerateInput) {
  std::vector<Point3> a = {{0, 0, 0}, {1, 1, 1}, {2, 2, 2}};
  EXPECT_THROW(solve_rigid_arun(a, a), Error);
  std::vector<Point3> b = {{0, 0, 0}};
  EXPECT_THROW(solve_rigid_arun(a, b), Error);
}

TEST(Registration, SphereNormalsAreRadial) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0.0, 1.0);
  PointCloud c;
  for (int i = 0; i < 4000; ++i) {
    Eigen::Vector3d d(n(rng), n(rng), n(rng));
    c.points.push_back(5.0 * d.normalized());
  }
  // Viewpoint at the center: normals point inward.
  const auto normals = estimate_normals(c, 1.0, 3, Point3::Zero());
  for (std::size_t i = 0; i < c.size(); ++i) {
    ASSERT_GT(normals[i].norm(), 0.5);
    EXPECT_GT(normals[i].dot(-c.points[i].normalized()), 0.99);
  }
}

TEST(Registration, SparsePointsGetZeroNormal) {
  PointCloud c;
  c.points = {{0, 0, 0}, {10, 0, 0}, {0, 10, 0}};
  const auto normals = estimate_normals(c, 1.0);
  for (const auto& nrm : normals) EXPECT_EQ(nrm.norm(), 0.0);
}

TEST(RegistrationProperty, FpfhInvariantUnderRigidMotion) {
  std::mt19937_64 rng(3);
  const auto c = voxel_downsample(structured_cloud(rng, 20000), 0.5);
  const auto t = random_transform(rng, 5.0);
  const auto moved = apply_transform(t, c);
  const auto n1 = estimate_normals(c, 1.5, 3, Point3(0, 0, 20));
  const auto n2 = estimate_normals(moved, 1.5, 3, t.apply(Point3(0, 0, 20)));
  const auto f1 = compute_fpfh(c, n1, 2.5);
  const auto f2 = compute_fpfh(moved, n2, 2.5);
  ASSERT_EQ(f1.size(), f2.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < f1.size(); ++i) {
    for (int b = 0; b < kFpfhSize; ++b) worst = std::max(worst, std::abs(f1[i].bins[b] - f2[i].bins[b]));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(RegistrationProperty, IcpObjectiveNeverIncreases) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 10; ++trial) {
    const auto target = structured_cloud(rng, 6000);
    const auto t = RigidTransform::from_euler(0.1 * (trial % 3), 0.02, -0.03, {0.4, -0.3, 0.1});
    auto source = apply_transform(t.inverse(), structured_cloud(rng, 3000));
    const auto r = icp_refine(source, target, RigidTransform::identity(), 1.0, 60, 1e-9);
    ASSERT_GE(r.objective_trace.size(), 2u);
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      EXPECT_LE(r.objective_trace[i], r.objective_trace[i - 1] + 1e-12) << "trial " << trial << " step " << i;
    }
    const auto start = RigidTransform::identity();
    EXPECT_LT(rotation_error(r.transform, t), rotation_error(start, t));
    EXPECT_LT(translation_error(r.transform, t), translation_error(start, t));
  }
}

TEST(Registration, IcpIdentityOnIdenticalClouds) {
  std::mt19937_64 rng(5);
  const auto c = structured_cloud(rng, 3000);
  const auto r = icp_refine(c, c, RigidTransform::identity(), 1.0, 20, 1e-9);
  EXPECT_LT(translation_error(r.transform, RigidTransform::identity()), 1e-9);
  EXPECT_NEAR(r.fitness, 1.0, 1e-12);
}

TEST(Registration, IcpWithoutCorrespondencesFails) {
  PointCloud a, b;
  a.points = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  b.points = {{100, 0, 0}, {101, 0, 0}, {100, 1, 0}, {100, 0, 1}};
  EXPECT_THROW(icp_refine(a, b, RigidTransform::identity(), 1.0, 10, 1e-9), Error);
}

TEST(Registration, RansacFindsGrossMotion) {
  std::mt19937_64 rng(6);
  const auto target = voxel_downsample(structured_cloud(rng, 30000), 0.5);
  const auto t = RigidTransform::from_euler(1.2, 0.0, 0.0, {3.0, -2.0, 0.5});
  const auto source = apply_transform(t.inverse(), target);
  HierarchyConfig cfg;
  cfg.normal_radius = 1.5;
  cfg.fpfh_radius = 2.5;
  cfg.ransac_inlier_threshold = 0.5;
  cfg.ransac_iterations = 20000;
  const auto ns = estimate_normals(source, cfg.normal_radius, 3, t.inverse().apply(Point3(0, 0, 20)));
  const auto nt = estimate_normals(target, cfg.normal_radius, 3, Point3(0, 0, 20));
  const auto r = coarse_align_ransac(source, target, compute_fpfh(source, ns, cfg.fpfh_radius),
                                     compute_fpfh(target, nt, cfg.fpfh_radius), cfg);
  EXPECT_LT(rotation_error(r.transform, t) * 180 / kPi, 5.0);
  EXPECT_LT(translation_error(r.transform, t), 0.5);
}

TEST(Registration, HierarchicalRegisterRecoversSceneNode) {
  auto spec = calibration_scene(42, 1);
  const auto scene = generate_synthetic_scene(spec);
  HierarchyConfig cfg;
  cfg.seed = 42;
  cfg.target_viewpoint = Point3(0, 0, 3);
  const auto src = accumulate_frames(scene.frames[0], 10.0);
  EXPECT_GE(src.size(), 20000u);
  const auto r = hierarchical_register(src, scene.reference, cfg);
  EXPECT_LT(rotation_error(r.transform, scene.extrinsics[0]) * 180 / kPi, 1.0);
  EXPECT_LT(translation_error(r.transform, scene.extrinsics[0]), 0.05);
  EXPECT_FALSE(calibration_failed(r, cfg));
}

TEST(Registration, HierarchyConfigValidation) {
  HierarchyConfig cfg;
  cfg.levels = {};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = HierarchyConfig{};
  cfg.levels = {{0.5, 1.0, 10}, {1.0, 2.0, 10}};
  EXPECT_THROW(cfg.validate(), Error);
  cfg = HierarchyConfig{};
  cfg.fpfh_radius = 0;
  EXPECT_THROW(cfg.validate(), Error);
}

TEST(Registration, AccumulateFramesHalfOpenWindow) {
  std::vector<PointCloud> frames(5);
  for (int k = 0; k < 5; ++k) {
    frames[k].timestamp_ns = k * 500'000'000LL;
    frames[k].points = {Point3(k, 0, 0)};
  }
  EXPECT_EQ(accumulate_frames(frames, 2.0).size(), 4u);  // 0, .5, 1, 1.5 s
  EXPECT_EQ(accumulate_frames(frames, 10.0).size(), 5u);
  EXPECT_EQ(accumulate_frames({}, 1.0).size(), 0u);
}

TEST(Registration, PointProjectionError) {
  const auto t = RigidTransform::from_euler(0.3, 0, 0, {1, 2, 0});
  std::vector<CornerPair> pairs;
  for (int i = 0; i < 5; ++i) {
    const Point3 p(i, 2 * i, 1);
    pairs.push_back({p, t.apply(p) + Point3(0.03, 0, 0)});
  }
  EXPECT_NEAR(evaluate_point_projection_error(pairs, t), 0.03, 1e-12);
  EXPECT_THROW(evaluate_point_projection_error({}, t), Error);
}

TEST(Registration, ReprojectionError) {
  PinholeCamera cam;
  cam.fx = cam.fy = 500;
  std::vector<PixelPair> pairs = {{{0, 0, 10}, {3, 4}}};
  EXPECT_NEAR(evaluate_reprojection_error(cam, pairs), 5.0, 1e-12);
  pairs = {{{0, 0, -10}, {0, 0}}};
  EXPECT_THROW(evaluate_reprojection_error(cam, pairs), Error);
}
