#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "gpa3d/scene_io.hpp"
#include "gpa3d/synth.hpp"

using namespace gpa3d;

TEST(Presets, KnownValues) {
  EXPECT_EQ(preset("waymo_like").beam_count, 64);
  EXPECT_EQ(preset("nuscenes_like").beam_count, 32);
  const DomainSpec kitti = preset("kitti_like");
  EXPECT_LT(kitti.length_scale, 1.0);
  EXPECT_LT(kitti.width_scale, 1.0);
  EXPECT_LT(kitti.height_scale, 1.0);
  EXPECT_DOUBLE_EQ(preset("nuscenes_like").points_per_object_base,
                   preset("waymo_like").points_per_object_base / 2.0);
  EXPECT_THROW(preset("waymo"), std::invalid_argument);
  try {
    preset("bogus");
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("waymo_like"), std::string::npos);
  }
}

TEST(GenerateDomain, DeterministicPerSeed) {
  DomainSpec spec = preset("waymo_like");
  spec.n_scenes = 5;
  spec.seed = 1;
  const auto a = generate_domain(spec);
  const auto b = generate_domain(spec);
  EXPECT_EQ(scenes_to_jsonl(a), scenes_to_jsonl(b));
  spec.seed = 2;
  EXPECT_NE(scenes_to_jsonl(a), scenes_to_jsonl(generate_domain(spec)));
}

TEST(GenerateDomain, ParallelEqualsSerial) {
  DomainSpec spec = preset("kitti_like");
  spec.n_scenes = 16;
  const auto serial = generate_domain(spec, 1);
  const auto parallel = generate_domain(spec, 4);
  EXPECT_EQ(scenes_to_jsonl(serial), scenes_to_jsonl(parallel));
}

TEST(GenerateDomain, EmptyRangeIsAnError) {
  DomainSpec spec;
  spec.x_min = 5.0;
  spec.x_max = 5.0;
  EXPECT_THROW(generate_domain(spec), std::invalid_argument);
}

TEST(GenerateDomain, MeanLengthTracksBaseDistribution) {
  DomainSpec spec = preset("waymo_like");
  spec.n_scenes = 150;
  double sum = 0.0;
  std::size_t count = 0;
  for (const Scene& scene : generate_domain(spec)) {
    for (const Box3D& box : scene.boxes) {
      sum += box.l;
      ++count;
    }
  }
  ASSERT_GE(count, 500u);
  EXPECT_NEAR(sum / count, 4.7, 0.05 * 4.7);
}

TEST(GenerateDomain, BeamCountHalvesObjectPoints) {
  DomainSpec spec64 = preset("waymo_like");
  spec64.n_scenes = 150;
  DomainSpec spec32 = spec64;
  spec32.beam_count = 32;
  const auto scenes64 = generate_domain(spec64);
  const auto scenes32 = generate_domain(spec32);
  std::size_t objects = 0;
  double points64 = 0.0, points32 = 0.0;
  for (std::size_t s = 0; s < scenes64.size(); ++s) {
    // Same layout stream: boxes must be identical.
    ASSERT_EQ(scenes64[s].boxes.size(), scenes32[s].boxes.size());
    objects += scenes64[s].boxes.size();
    for (std::size_t b = 0; b < scenes64[s].boxes.size(); ++b) {
      ASSERT_DOUBLE_EQ(scenes64[s].boxes[b].cx, scenes32[s].boxes[b].cx);
      double c64 = 0.0, c32 = 0.0;
      for (const Point& p : scenes64[s].points) {
        if (point_in_box(p, scenes64[s].boxes[b])) c64 += 1.0;
      }
      for (const Point& p : scenes32[s].points) {
        if (point_in_box(p, scenes32[s].boxes[b])) c32 += 1.0;
      }
      points64 += c64;
      points32 += c32;
    }
  }
  ASSERT_GE(objects, 500u);
  EXPECT_NEAR(points32 / points64, 0.5, 0.05);
}

TEST(GenerateDomain, EveryBoxHasPointsInsideInflatedBounds) {
  DomainSpec spec = preset("nuscenes_like");
  spec.n_scenes = 30;
  spec.dropout_vs_range = 0.2;  // stress the minimum-one-point rule
  for (const Scene& scene : generate_domain(spec)) {
    for (const Box3D& box : scene.boxes) {
      Box3D inflated = box;
      inflated.l += 6.0 * spec.noise_sigma;
      inflated.w += 6.0 * spec.noise_sigma;
      inflated.h += 6.0 * spec.noise_sigma;
      std::size_t inside = 0;
      for (const Point& p : scene.points) {
        if (point_in_box(p, inflated)) ++inside;
      }
      EXPECT_GE(inside, 1u) << scene.id;
    }
    for (const Box3D& box : scene.boxes) {
      EXPECT_GE(box.cx, spec.x_min);
      EXPECT_LE(box.cx, spec.x_max);
      EXPECT_GE(box.cy, spec.y_min);
      EXPECT_LE(box.cy, spec.y_max);
      EXPECT_GE(std::hypot(box.cx, box.cy), 1.0);
    }
  }
}

TEST(GenerateDomain, OffsetAnglesCoverAllGroups) {
  DomainSpec spec = preset("waymo_like");
  const int k = 8;
  spec.n_scenes = 120;  // ~500 objects, well past 50 per group on average
  std::set<int> seen;
  for (const Scene& scene : generate_domain(spec)) {
    for (const Box3D& box : scene.boxes) seen.insert(group_index(box, k));
  }
  EXPECT_EQ(seen.size(), static_cast<std::size_t>(k));
}

TEST(GenerateDomain, IntensityWithinUnitInterval) {
  DomainSpec spec = preset("waymo_like");
  spec.n_scenes = 3;
  for (const Scene& scene : generate_domain(spec)) {
    for (const Point& p : scene.points) {
      ASSERT_GE(p.intensity, 0.0);
      ASSERT_LE(p.intensity, 1.0);
    }
  }
}
