#include <gtest/gtest.h>

#include <random>

#include "mvlk/eval.hpp"
#include "oracles.hpp"

using namespace mvlk;

using oracle::car_at;

TEST(Ap, PerfectDetectionsScoreOne) {
  std::vector<FrameBox> gt = {{0, car_at(0, 0)}, {0, car_at(10, 0)}, {1, car_at(5, 5)}};
  EXPECT_DOUBLE_EQ(compute_ap(gt, gt, ObjectClass::kCar), 1.0);
  EXPECT_DOUBLE_EQ(compute_recall(gt, gt, ObjectClass::kCar), 1.0);
}

TEST(Ap, HandComputedCurve) {
  // Scores 0.9 (TP), 0.8 (FP), 0.7 (TP); 4 ground truths.
  std::vector<FrameBox> gt = {{0, car_at(0, 0)}, {0, car_at(10, 0)}, {0, car_at(20, 0)}, {0, car_at(30, 0)}};
  std::vector<FrameBox> det = {{0, car_at(0, 0, 0.9)}, {0, car_at(50, 0, 0.8)}, {0, car_at(10, 0, 0.7)}};
  const auto r = compute_ap_detailed(det, gt, ObjectClass::kCar, DetectionEvalConfig{});
  ASSERT_EQ(r.curve.size(), 3u);
  EXPECT_DOUBLE_EQ(r.curve[0].recall, 0.25);
  EXPECT_DOUBLE_EQ(r.curve[2].precision, 2.0 / 3.0);
  // Samples 1/40..10/40 take precision 1; 11/40..20/40 take 2/3.
  EXPECT_NEAR(r.ap, (10 * 1.0 + 10 * (2.0 / 3.0)) / 40.0, 1e-12);
  auto eleven = DetectionEvalConfig{};
  eleven.recall_points = 11;
  // Samples 0, .1, .2 take 1; .3, .4, .5 take 2/3.
  EXPECT_NEAR(compute_ap(det, gt, ObjectClass::kCar, eleven), (3.0 + 3.0 * 2.0 / 3.0) / 11.0, 1e-12);
}

TEST(Ap, DuplicateDetectionIsFalsePositive) {
  std::vector<FrameBox> gt = {{0, car_at(0, 0)}};
  std::vector<FrameBox> det = {{0, car_at(0, 0, 0.9)}, {0, car_at(0, 0, 0.8)}};
  const auto r = compute_ap_detailed(det, gt, ObjectClass::kCar, DetectionEvalConfig{});
  EXPECT_EQ(r.true_positives, 1);
  EXPECT_DOUBLE_EQ(r.ap, 1.0);
}

TEST(Ap, NoGroundTruthIsAnError) {
  std::vector<FrameBox> gt = {{0, car_at(0, 0)}};
  try {
    compute_ap(gt, gt, ObjectClass::kCyclist);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNoGroundTruth);
  }
}

TEST(ApProperty, MatchesCutoffEnumeration) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 200; ++trial) {
    auto [det, gt] = oracle::random_ap_instance(rng);
    auto cfg = DetectionEvalConfig::uniform(trial % 2 ? 0.5 : 0.25);
    cfg.recall_points = trial % 4 == 3 ? 11 : 40;
    cfg.metric = trial % 5 == 0 ? OverlapMetric::kIouBev : OverlapMetric::kIou3d;
    EXPECT_NEAR(compute_ap(det, gt, ObjectClass::kCar, cfg), oracle::ap_by_cutoffs(det, gt, ObjectClass::kCar, cfg),
                1e-12)
        << "trial " << trial;
  }
}

TEST(Mot, IdenticalTrajectoriesArePerfect) {
  std::mt19937_64 rng(3);
  const auto gt = oracle::random_trajectories(rng, 5, 20);
  const auto r = compute_clear_mot(gt, gt);
  EXPECT_DOUBLE_EQ(r.mota, 1.0);
  EXPECT_NEAR(r.motp, 1.0, 1e-12);
  EXPECT_EQ(r.ids, 0);
  EXPECT_EQ(r.frag, 0);
  EXPECT_EQ(r.fn + r.fp, 0);
}

TEST(Mot, HandCountedSwitchAndFragment) {
  TrajectorySet gt, hyp;
  for (int k = 0; k < 6; ++k) gt[0].push_back({k, car_at(k, 0)});
  for (int k : {0, 1}) hyp[10].push_back({k, car_at(k, 0)});
  for (int k : {3, 4, 5}) hyp[11].push_back({k, car_at(k, 0)});
  hyp[12].push_back({2, car_at(40, 40)});
  const auto r = compute_clear_mot(hyp, gt);
  EXPECT_EQ(r.gt, 6);
  EXPECT_EQ(r.fn, 1);
  EXPECT_EQ(r.fp, 1);
  EXPECT_EQ(r.ids, 1);
  EXPECT_EQ(r.frag, 1);
  EXPECT_NEAR(r.mota, 1.0 - 3.0 / 6.0, 1e-12);
}

TEST(Mot, PreviousMatchIsKept) {
  // Frame 1: hypothesis 11 overlaps better, but 10 still passes the threshold.
  TrajectorySet gt, hyp;
  gt[0] = {{0, car_at(0, 0)}, {1, car_at(0, 0)}};
  hyp[10] = {{0, car_at(0, 0)}, {1, car_at(0.8, 0)}};
  hyp[11] = {{1, car_at(0.05, 0)}};
  EXPECT_EQ(compute_clear_mot(hyp, gt).ids, 0);
  MotEvalConfig cfg;
  cfg.prefer_previous = false;
  EXPECT_EQ(compute_clear_mot(hyp, gt, cfg).ids, 1);
}

TEST(MotProperty, MatchesExhaustiveMatching) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gt = oracle::random_trajectories(rng, 2 + trial % 4, 8);
    const auto hyp = oracle::corrupt(gt, rng);
    MotEvalConfig cfg;
    cfg.threshold = trial % 2 ? 0.25 : 0.5;
    cfg.prefer_previous = trial % 7 != 0;
    const auto r = compute_clear_mot(hyp, gt, cfg);
    const auto o = oracle::clear_mot_brute(hyp, gt, cfg);
    ASSERT_EQ(r.gt, o.gt);
    EXPECT_EQ(r.fn, o.fn) << "trial " << trial;
    EXPECT_EQ(r.fp, o.fp) << "trial " << trial;
    EXPECT_EQ(r.ids, o.ids) << "trial " << trial;
    EXPECT_EQ(r.frag, o.frag) << "trial " << trial;
    EXPECT_NEAR(r.mota, 1.0 - static_cast<double>(o.fn + o.fp + o.ids) / o.gt, 1e-12);
    if (o.matches > 0) {
      EXPECT_NEAR(r.motp, o.sim_sum / o.matches, 1e-12);
    }
  }
}

TEST(Mot, DistanceMetric) {
  TrajectorySet gt, hyp;
  gt[0] = {{0, car_at(0, 0)}};
  hyp[1] = {{0, car_at(1.5, 0)}};
  MotEvalConfig cfg;
  cfg.metric = MotMetric::kCenterDistance;
  cfg.threshold = 2.0;
  const auto r = compute_clear_mot(hyp, gt, cfg);
  EXPECT_EQ(r.matches, 1);
  EXPECT_NEAR(r.motp, 1.5, 1e-12);
  cfg.threshold = 1.0;
  EXPECT_EQ(compute_clear_mot(hyp, gt, cfg).matches, 0);
}

TEST(Mot, ConfigValidation) {
  MotEvalConfig cfg;
  cfg.threshold = 1.5;
  EXPECT_THROW(compute_clear_mot({}, {}, cfg), Error);
}
