#include <gtest/gtest.h>

#include "mvlk/scene.hpp"

using namespace mvlk;

TEST(Scene, DeterministicInSeed) {
  const auto spec = crossroad_scene(5, 3, 2000);
  const auto a = generate_synthetic_scene(spec), b = generate_synthetic_scene(spec);
  for (std::size_t n = 0; n < a.frames.size(); ++n) {
    for (std::size_t k = 0; k < a.frames[n].size(); ++k) EXPECT_EQ(a.frames[n][k].points, b.frames[n][k].points);
  }
  EXPECT_EQ(a.reference.points, b.reference.points);
  const auto c = generate_synthetic_scene(crossroad_scene(6, 3, 2000));
  EXPECT_NE(a.frames[0][0].points, c.frames[0][0].points);
}

TEST(Scene, NoObjectsGivesEmptyGroundTruth) {
  auto spec = crossroad_scene(1, 2, 1000);
  spec.objects.clear();
  const auto s = generate_synthetic_scene(spec);
  for (const auto& boxes : s.boxes) EXPECT_TRUE(boxes.empty());
  EXPECT_TRUE(s.trajectories.empty());
  EXPECT_FALSE(s.frames[0][0].empty());
}

TEST(Scene, FramesAreStampedAndTagged) {
  auto spec = crossroad_scene(2, 4, 500);
  spec.start_time_ns = 1'000'000'000;
  const auto s = generate_synthetic_scene(spec);
  ASSERT_EQ(s.frames.size(), spec.node_poses.size());
  for (std::size_t n = 0; n < s.frames.size(); ++n) {
    for (std::size_t k = 0; k < s.frames[n].size(); ++k) {
      const auto& f = s.frames[n][k];
      EXPECT_EQ(f.timestamp_ns, 1'000'000'000 + static_cast<std::int64_t>(k) * 100'000'000);
      EXPECT_EQ(f.source_node, n);
      EXPECT_TRUE(f.valid());
      for (const auto& p : f.points) EXPECT_LE(p.norm(), spec.lidar.max_range + 1.0);
    }
  }
}

TEST(Scene, VisibleCountsMatchObjectReturns) {
  auto spec = crossroad_scene(3, 2, 4000);
  spec.lidar.noise_sigma = 0.0;
  const auto s = generate_synthetic_scene(spec);
  for (std::size_t n = 0; n < s.frames.size(); ++n) {
    for (std::size_t k = 0; k < s.frames[n].size(); ++k) {
      int on_objects = 0;
      for (double i : s.frames[n][k].intensity) on_objects += i > 0.7;
      int visible = 0;
      for (int v : s.visible[n][k]) visible += v;
      EXPECT_EQ(on_objects, visible);
    }
  }
}

TEST(Scene, NoiseFreeReturnsLieOnSurfaces) {
  auto spec = calibration_scene(4, 1);
  spec.lidar.noise_sigma = 0.0;
  spec.lidar.points_per_frame = 3000;
  const auto s = generate_synthetic_scene(spec);
  int ground = 0;
  for (std::size_t i = 0; i < s.frames[0][0].size(); ++i) {
    const auto w = s.extrinsics[0].apply(s.frames[0][0].points[i]);
    if (s.frames[0][0].intensity[i] < 0.3) {
      EXPECT_NEAR(w.z(), 0.0, 1e-9);
      ++ground;
    }
  }
  EXPECT_GT(ground, 100);
}

TEST(Scene, WalkersPassTheCrossroad) {
  const auto spec = walker_scene(1, 120, 2000);
  ASSERT_EQ(spec.objects.size(), 4u);
  for (const auto& o : spec.objects) {
    EXPECT_EQ(o.class_label, ObjectClass::kPedestrian);
    const Vec2 mid = o.start + o.velocity * 6.0;
    EXPECT_LT(mid.norm(), 15.0);
  }
}

TEST(Scene, SpecValidation) {
  SceneSpec spec;
  EXPECT_THROW(spec.validate(), Error);  // no nodes
  spec.node_poses = {RigidTransform::identity()};
  EXPECT_NO_THROW(spec.validate());
  spec.lidar.fov_vertical_deg = 180.0;
  EXPECT_THROW(spec.validate(), Error);
}
