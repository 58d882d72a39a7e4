#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "gpa3d/geometry.hpp"
#include "gpa3d/rng.hpp"
#include "gpa3d/scene_io.hpp"
#include "oracles.hpp"

using namespace gpa3d;

namespace {

Box3D box_at(double cx, double cy, double yaw = 0.0, double l = 4.0, double w = 2.0) {
  Box3D b;
  b.cx = cx;
  b.cy = cy;
  b.cz = 0.0;
  b.h = 1.6;
  b.w = w;
  b.l = l;
  b.yaw = yaw;
  return b;
}

Box3D random_box(Rng& rng, double center_span = 4.0) {
  Box3D b = box_at(rng.uniform(-center_span, center_span),
                   rng.uniform(-center_span, center_span),
                   rng.uniform(-std::numbers::pi, std::numbers::pi),
                   rng.uniform(1.0, 6.0), rng.uniform(0.8, 3.0));
  return b;
}

}  // namespace

TEST(ObservationAngle, AxisAlignedCases) {
  EXPECT_DOUBLE_EQ(observation_angle(box_at(10.0, 0.0)), 0.0);
  EXPECT_DOUBLE_EQ(observation_angle(box_at(0.0, 10.0)), std::numbers::pi / 2.0);
  EXPECT_NEAR(observation_angle(box_at(-5.0, -5.0)), std::atan2(-5.0, -5.0), 1e-15);
  EXPECT_NEAR(observation_angle(box_at(-5.0, -5.0)), -3.0 * std::numbers::pi / 4.0,
              1e-12);
}

TEST(ObservationAngle, OriginIsAnError) {
  EXPECT_THROW(observation_angle(box_at(0.0, 0.0)), std::domain_error);
}

TEST(OffsetAngle, KnownCases) {
  EXPECT_DOUBLE_EQ(offset_angle(box_at(10.0, 0.0, 0.0)), 0.0);
  // Same relative view as the first case, rotated a quarter turn.
  EXPECT_NEAR(offset_angle(box_at(0.0, 10.0, std::numbers::pi / 2.0)), 0.0, 1e-12);
  EXPECT_NEAR(offset_angle(box_at(10.0, 0.0, std::numbers::pi / 4.0)),
              7.0 * std::numbers::pi / 4.0, 1e-12);
}

TEST(OffsetAngle, PropagatesOriginError) {
  EXPECT_THROW(offset_angle(box_at(0.0, 0.0, 1.0)), std::domain_error);
}

TEST(NormTwoPi, RangeAndPeriodicity) {
  Rng rng(7);
  for (int i = 0; i < 2000; ++i) {
    const double theta = rng.uniform(-50.0, 50.0);
    const double n = norm_two_pi(theta);
    ASSERT_GE(n, 0.0);
    ASSERT_LT(n, kTwoPi);
    for (int k : {-3, -1, 1, 4}) {
      ASSERT_NEAR(norm_two_pi(theta + kTwoPi * k), n, 1e-9);
    }
  }
  EXPECT_DOUBLE_EQ(norm_two_pi(kTwoPi), 0.0);
  EXPECT_DOUBLE_EQ(norm_two_pi(0.0), 0.0);
}

TEST(GroupIndex, KnownCases) {
  // offset 0, K = 8 -> group 1
  EXPECT_EQ(group_index(box_at(10.0, 0.0, 0.0), 8), 1);
  // offset 7*pi/4 + 0.01, K = 8 -> group 8
  Box3D b = box_at(10.0, 0.0, 0.0);
  b.yaw = -(7.0 * std::numbers::pi / 4.0 + 0.01);
  EXPECT_EQ(group_index(b, 8), 8);
  // offset pi, K = 4 -> group 3
  Box3D c = box_at(10.0, 0.0, 0.0);
  c.yaw = -std::numbers::pi;
  EXPECT_EQ(group_index(c, 4), 3);
}

TEST(GroupIndex, BoundaryCases) {
  Box3D zero_offset = box_at(10.0, 0.0, 0.0);
  EXPECT_EQ(group_index(zero_offset, 8), 1);
  // Offset just below a full turn must land in group K, never K+1.
  Box3D near_full = box_at(10.0, 0.0, 0.0);
  near_full.yaw = 1e-12;  // offset = 2*pi - 1e-12
  EXPECT_EQ(group_index(near_full, 8), 8);
  near_full.yaw = 1e-9;
  EXPECT_EQ(group_index(near_full, 8), 8);
  // An offset within one ulp of the full turn wraps to zero, hence group 1.
  near_full.yaw = std::nextafter(0.0, 1.0);
  EXPECT_EQ(group_index(near_full, 8), 1);
}

TEST(GroupIndex, TotalAndInRange) {
  Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    Box3D b = random_box(rng, 30.0);
    if (b.cx == 0.0 && b.cy == 0.0) continue;
    for (int k : {1, 2, 3, 8, 32}) {
      const int q = group_index(b, k);
      ASSERT_GE(q, 1);
      ASSERT_LE(q, k);
    }
  }
}

TEST(GroupIndex, RotationInvariance) {
  Rng rng(13);
  for (int i = 0; i < 1000; ++i) {
    Box3D b = random_box(rng, 20.0);
    if (std::hypot(b.cx, b.cy) < 0.5) continue;
    const double base = offset_angle(b);
    for (int j = 0; j < 16; ++j) {
      const double phi = rng.uniform(0.0, kTwoPi);
      Box3D rotated = b;
      const double c = std::cos(phi), s = std::sin(phi);
      rotated.cx = c * b.cx - s * b.cy;
      rotated.cy = s * b.cx + c * b.cy;
      rotated.yaw = b.yaw + phi;
      const double diff = std::abs(norm_pi(offset_angle(rotated) - base));
      ASSERT_LE(diff, 1e-9);
      ASSERT_EQ(group_index(rotated, 8), group_index(b, 8));
    }
  }
}

TEST(AdjacentGroups, WrapsCyclically) {
  EXPECT_EQ(adjacent_groups(3, 8), (std::set<int>{2, 4}));
  EXPECT_EQ(adjacent_groups(1, 8), (std::set<int>{8, 2}));
  EXPECT_EQ(adjacent_groups(8, 8), (std::set<int>{7, 1}));
  EXPECT_EQ(adjacent_groups(1, 1), std::set<int>{});
  EXPECT_EQ(adjacent_groups(1, 2), std::set<int>{2});
  EXPECT_EQ(adjacent_groups(2, 2), std::set<int>{1});
  EXPECT_THROW(adjacent_groups(0, 4), std::invalid_argument);
}

TEST(BevIou, IdenticalBoxes) {
  Box3D a = box_at(3.0, -2.0, 0.7);
  EXPECT_NEAR(bev_iou(a, a), 1.0, 1e-12);
}

TEST(BevIou, DisjointBoxes) {
  EXPECT_DOUBLE_EQ(bev_iou(box_at(0.0, 0.0), box_at(100.0, 0.0)), 0.0);
}

TEST(BevIou, HalfOverlapUnitSquares) {
  Box3D a = box_at(0.0, 0.0, 0.0, 1.0, 1.0);
  Box3D b = box_at(0.5, 0.0, 0.0, 1.0, 1.0);
  EXPECT_NEAR(bev_iou(a, b), 1.0 / 3.0, 1e-12);
}

TEST(BevIou, RotatedSquareAgainstOracle) {
  Box3D a = box_at(0.0, 0.0, 0.0, 1.0, 1.0);
  Box3D b = box_at(0.0, 0.0, std::numbers::pi / 4.0, 1.0, 1.0);
  const double mc = oracle::mc_bev_iou(a, b, 500000, 123);
  EXPECT_NEAR(bev_iou(a, b), mc, 0.01);
  // Analytic value: intersection is a regular octagon of area 2*sqrt(2)-2,
  // giving IoU = 1/sqrt(2).
  const double inter = 2.0 * std::sqrt(2.0) - 2.0;
  EXPECT_NEAR(bev_iou(a, b), inter / (2.0 - inter), 1e-9);
  EXPECT_NEAR(bev_iou(a, b), 1.0 / std::sqrt(2.0), 1e-9);
}

TEST(BevIou, SymmetricBoundedAndMatchesOracle) {
  Rng rng(17);
  for (int i = 0; i < 120; ++i) {
    Box3D a = random_box(rng);
    Box3D b = random_box(rng);
    const double iou_ab = bev_iou(a, b);
    const double iou_ba = bev_iou(b, a);
    ASSERT_NEAR(iou_ab, iou_ba, 1e-12);
    ASSERT_GE(iou_ab, 0.0);
    ASSERT_LE(iou_ab, 1.0);
    const double mc = oracle::mc_bev_iou(a, b, 100000, 1000 + i);
    ASSERT_NEAR(iou_ab, mc, 0.015) << "pair " << i;
  }
}

TEST(SceneIo, RoundTrip) {
  Scene scene;
  scene.id = "s0";
  scene.domain = DomainTag::kTarget;
  scene.points = {{1.0, 2.0, -0.5, 0.25}, {0.0, -3.5, 0.1, 1.0}};
  Box3D b = box_at(5.0, 1.0, 9.0);  // yaw outside [-pi, pi) on purpose
  b.score = 0.75;
  scene.boxes = {b, box_at(-4.0, 2.0, -0.3)};

  const std::string text = scenes_to_jsonl({scene});
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  const auto back = scenes_from_jsonl(text);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].id, "s0");
  EXPECT_EQ(back[0].domain, DomainTag::kTarget);
  ASSERT_EQ(back[0].points.size(), 2u);
  EXPECT_DOUBLE_EQ(back[0].points[1].y, -3.5);
  ASSERT_EQ(back[0].boxes.size(), 2u);
  ASSERT_TRUE(back[0].boxes[0].score.has_value());
  EXPECT_DOUBLE_EQ(*back[0].boxes[0].score, 0.75);
  EXPECT_FALSE(back[0].boxes[1].score.has_value());
  // Serialized yaw is normalized into [-pi, pi) but equivalent mod 2*pi.
  EXPECT_GE(back[0].boxes[0].yaw, -std::numbers::pi);
  EXPECT_LT(back[0].boxes[0].yaw, std::numbers::pi);
  EXPECT_NEAR(norm_two_pi(back[0].boxes[0].yaw - 9.0), 0.0, 1e-12);
}

TEST(SceneIo, RejectsBadInput) {
  EXPECT_THROW(scenes_from_jsonl("{\"id\":\"x\"}\n"), std::runtime_error);
  EXPECT_THROW(
      scenes_from_jsonl("{\"id\":\"x\",\"domain\":\"moon\",\"points\":[],\"boxes\":[]}\n"),
      std::runtime_error);
  const char* bad_dims =
      "{\"id\":\"x\",\"domain\":\"source\",\"points\":[],"
      "\"boxes\":[{\"cx\":1,\"cy\":0,\"cz\":0,\"h\":0,\"w\":1,\"l\":1,\"yaw\":0}]}\n";
  EXPECT_THROW(scenes_from_jsonl(bad_dims), std::runtime_error);
  EXPECT_TRUE(scenes_from_jsonl("").empty());
}
