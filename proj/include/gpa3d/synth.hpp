#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpa3d/geometry.hpp"
#include "gpa3d/parallel.hpp"
#include "gpa3d/rng.hpp"

namespace gpa3d {

// Recipe for one synthetic LiDAR domain. The two stock shifts are object
// size (length/width/height multipliers) and scan density (beam_count plus
// the per-object point budget).
struct DomainSpec {
  std::uint64_t seed = 1;
  int n_scenes = 200;
  int objects_min = 4;
  int objects_max = 7;
  double length_scale = 1.0;
  double width_scale = 1.0;
  double height_scale = 1.0;
  int beam_count = 64;
  double points_per_object_base = 400.0;
  double dropout_vs_range = 0.03;  // per meter of sensor distance
  double noise_sigma = 0.1;        // meters, clamped at 3 sigma
  double surface_inset = 0.35;     // sampled shell sits this far inside the bbox
  double heading_mean = std::numbers::pi / 2.0;  // lane direction
  double heading_spread = 0.2;     // radians, clamped at 3 sigma
  double x_min = -8.0, x_max = 8.0;
  double y_min = -8.0, y_max = 8.0;
  double ground_z = -0.85;          // sensor sits at mid-vehicle height
  double ground_points_base = 120.0;
  // Vertical clutter standing on the ground plane (vegetation, poles, street
  // furniture): dense blobs that sit near the foreground decision boundary.
  int blob_min = 6;
  int blob_max = 10;
  double blob_points = 55.0;
  double blob_radius = 0.55;
  double blob_height = 1.2;
  DomainTag domain = DomainTag::kSource;
  std::string id_prefix = "scene";
};

namespace synth_detail {

// Base car size distribution, before the domain scale factors.
constexpr double kBaseLengthMean = 4.7, kBaseLengthSd = 0.3;
constexpr double kBaseWidthMean = 1.9, kBaseWidthSd = 0.1;
constexpr double kBaseHeightMean = 1.7, kBaseHeightSd = 0.1;
constexpr double kMinSensorDistance = 3.0;

inline void validate(const DomainSpec& spec) {
  if (spec.x_min >= spec.x_max || spec.y_min >= spec.y_max) {
    throw std::invalid_argument("domain spec has an empty range");
  }
  if (spec.beam_count < 1) throw std::invalid_argument("beam_count must be >= 1");
  if (spec.n_scenes < 1) throw std::invalid_argument("n_scenes must be >= 1");
  if (spec.length_scale <= 0.0 || spec.width_scale <= 0.0 ||
      spec.height_scale <= 0.0) {
    throw std::invalid_argument("size scale factors must be positive");
  }
  if (spec.objects_min < 0 || spec.objects_max < spec.objects_min) {
    throw std::invalid_argument("objects_per_scene range is invalid");
  }
}

inline int object_point_count(const DomainSpec& spec, double range) {
  const double raw = spec.points_per_object_base *
                     std::exp(-spec.dropout_vs_range * range) *
                     (static_cast<double>(spec.beam_count) / 64.0);
  const int n = static_cast<int>(std::lround(raw));
  return n < 1 ? 1 : n;
}

// LiDAR sees at most two side faces of a box; which two is decided by the
// direction from the box to the sensor in the box frame. Points are drawn on
// those faces (weighted by apparent size) and jittered in the box frame so
// the 3-sigma inflation bound holds per axis. The sampled shell sits
// surface_inset inside the annotated extents, the way real boxes are drawn
// around a point shell that stops short of the bbox extremities; with
// 3 * noise_sigma <= surface_inset the points stay inside the footprint.
inline void sample_object_points(const DomainSpec& spec, const Box3D& box, int count,
                                 Rng& rng, std::vector<Point>& out) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  // Direction from box center toward the sensor, in the box frame.
  const double to_sensor_x = c * (-box.cx) + s * (-box.cy);
  const double to_sensor_y = -s * (-box.cx) + c * (-box.cy);
  const double norm = std::hypot(to_sensor_x, to_sensor_y);
  const double dir_x = norm > 0.0 ? to_sensor_x / norm : 1.0;
  const double dir_y = norm > 0.0 ? to_sensor_y / norm : 0.0;
  const double face_x_weight = std::abs(dir_x) * box.w * box.h;
  const double face_y_weight = std::abs(dir_y) * box.l * box.h;
  const double total_weight = face_x_weight + face_y_weight;
  const double sign_x = dir_x >= 0.0 ? 1.0 : -1.0;
  const double sign_y = dir_y >= 0.0 ? 1.0 : -1.0;
  const double shell_x = std::max(0.05, 0.5 * box.l - spec.surface_inset);
  const double shell_y = std::max(0.05, 0.5 * box.w - spec.surface_inset);
  // Returns bunch up where the ray meets the face closest to head-on, which
  // is the face point nearest the sensor.
  const double along_x_peak = std::clamp(to_sensor_x, -shell_x, shell_x);
  const double along_y_peak = std::clamp(to_sensor_y, -shell_y, shell_y);
  for (int i = 0; i < count; ++i) {
    double lx, ly, lz;
    double incidence;  // |cos| between the face normal and the sensor ray
    const bool on_x_face =
        total_weight <= 0.0 ? true : rng.uniform() * total_weight < face_x_weight;
    if (on_x_face) {
      lx = sign_x * shell_x;
      ly = std::clamp(rng.normal(along_y_peak, 0.5 * shell_y), -shell_y, shell_y);
      incidence = std::abs(dir_x);
    } else {
      lx = std::clamp(rng.normal(along_x_peak, 0.5 * shell_x), -shell_x, shell_x);
      ly = sign_y * shell_y;
      incidence = std::abs(dir_y);
    }
    lz = rng.uniform(-0.5 * box.h, 0.5 * box.h);
    lx += rng.normal_clamped(0.0, spec.noise_sigma, 3.0);
    ly += rng.normal_clamped(0.0, spec.noise_sigma, 3.0);
    lz += rng.normal_clamped(0.0, spec.noise_sigma, 3.0);
    Point p;
    p.x = box.cx + c * lx - s * ly;
    p.y = box.cy + s * lx + c * ly;
    p.z = box.cz + lz;
    // Returns weaken toward grazing incidence, so the intensity statistics of
    // a cell track the angle under which its faces are seen.
    p.intensity = std::clamp(0.25 + 0.6 * incidence + rng.uniform(-0.08, 0.08),
                             0.05, 1.0);
    out.push_back(p);
  }
}

}  // namespace synth_detail

// Generates scene `index` of the domain. Layout, object points and clutter
// use separate streams so changing the point budget never reshuffles boxes.
inline Scene generate_scene(const DomainSpec& spec, int index) {
  synth_detail::validate(spec);
  Rng layout = make_stream(spec.seed, stream::kSceneGen, 4ULL * index + 0);
  Rng surface = make_stream(spec.seed, stream::kSceneGen, 4ULL * index + 1);
  Rng clutter = make_stream(spec.seed, stream::kSceneGen, 4ULL * index + 2);

  Scene scene;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "-%05d", index);
  scene.id = spec.id_prefix + buf;
  scene.domain = spec.domain;

  const int wanted =
      static_cast<int>(layout.uniform_int(spec.objects_min, spec.objects_max));
  for (int obj = 0; obj < wanted; ++obj) {
    Box3D box;
    box.l = spec.length_scale * layout.normal_clamped(synth_detail::kBaseLengthMean,
                                                      synth_detail::kBaseLengthSd, 3.0);
    box.w = spec.width_scale * layout.normal_clamped(synth_detail::kBaseWidthMean,
                                                     synth_detail::kBaseWidthSd, 3.0);
    box.h = spec.height_scale * layout.normal_clamped(synth_detail::kBaseHeightMean,
                                                      synth_detail::kBaseHeightSd, 3.0);
    box.cz = spec.ground_z + 0.5 * box.h;
    // Centers stay inside the range; bodies may overhang the boundary the way
    // partially visible objects do at a real sensor's range limit.
    const double margin = 0.5;
    bool placed = false;
    for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
      box.cx = layout.uniform(spec.x_min + margin, spec.x_max - margin);
      box.cy = layout.uniform(spec.y_min + margin, spec.y_max - margin);
      // Lane-aligned headings around heading_mean, canonicalized to [0, pi):
      // the sampled boxes are end-to-end symmetric, so yaw is only meaningful
      // modulo a half turn. Offset angles still sweep all groups because the
      // bearing of the placement does.
      box.yaw = norm_two_pi(layout.normal_clamped(spec.heading_mean,
                                                  spec.heading_spread, 3.0));
      if (box.yaw >= std::numbers::pi) box.yaw -= std::numbers::pi;
      if (std::hypot(box.cx, box.cy) < synth_detail::kMinSensorDistance) continue;
      bool collides = false;
      for (const Box3D& other : scene.boxes) {
        Box3D inflated = other;
        inflated.l += 1.0;
        inflated.w += 1.0;
        if (bev_iou(inflated, box) > 0.0) {
          collides = true;
          break;
        }
      }
      placed = !collides;
    }
    if (!placed) continue;  // crowded scene, drop the object
    scene.boxes.push_back(box);
  }

  for (const Box3D& box : scene.boxes) {
    const double range = std::hypot(box.cx, box.cy);
    const int count = synth_detail::object_point_count(spec, range);
    synth_detail::sample_object_points(spec, box, count, surface, scene.points);
  }

  const int n_ground = std::max(
      0, static_cast<int>(std::lround(spec.ground_points_base *
                                      static_cast<double>(spec.beam_count) / 64.0)));
  for (int i = 0; i < n_ground; ++i) {
    Point p;
    p.x = clutter.uniform(spec.x_min, spec.x_max);
    p.y = clutter.uniform(spec.y_min, spec.y_max);
    p.z = spec.ground_z + clutter.normal_clamped(0.0, 0.03, 3.0);
    p.intensity = clutter.uniform(0.0, 0.4);
    scene.points.push_back(p);
  }

  // Blob clutter: dense vertical clusters standing on the ground, kept clear
  // of the annotated boxes.
  const int n_blobs =
      spec.blob_max > 0
          ? static_cast<int>(clutter.uniform_int(spec.blob_min, spec.blob_max))
          : 0;
  for (int blob = 0; blob < n_blobs; ++blob) {
    double bx = 0.0, by = 0.0;
    bool placed = false;
    for (int attempt = 0; attempt < 30 && !placed; ++attempt) {
      bx = clutter.uniform(spec.x_min, spec.x_max);
      by = clutter.uniform(spec.y_min, spec.y_max);
      placed = true;
      for (const Box3D& box : scene.boxes) {
        Box3D inflated = box;
        inflated.l += 2.0 * spec.blob_radius + 1.0;
        inflated.w += 2.0 * spec.blob_radius + 1.0;
        if (point_in_box_bev(bx, by, inflated)) {
          placed = false;
          break;
        }
      }
    }
    if (!placed) continue;
    const double radius = clutter.uniform(0.6, 1.4) * spec.blob_radius;
    const int n_points = std::max(
        1, static_cast<int>(std::lround(clutter.uniform(0.8, 1.4) * spec.blob_points *
                                        static_cast<double>(spec.beam_count) / 64.0)));
    for (int i = 0; i < n_points; ++i) {
      Point p;
      p.x = bx + clutter.normal_clamped(0.0, radius, 2.0);
      p.y = by + clutter.normal_clamped(0.0, radius, 2.0);
      p.z = spec.ground_z + std::abs(clutter.normal_clamped(0.0, 0.5, 2.4)) *
                                spec.blob_height;
      p.intensity = clutter.uniform(0.2, 0.6);
      scene.points.push_back(p);
    }
  }
  return scene;
}

inline std::vector<Scene> generate_domain(const DomainSpec& spec, int workers = 1) {
  synth_detail::validate(spec);
  std::vector<Scene> scenes(spec.n_scenes);
  parallel_for_indexed(spec.n_scenes, workers,
                       [&](int i) { scenes[i] = generate_scene(spec, i); });
  return scenes;
}

// Stock domain presets. kitti_like narrows object sizes relative to
// waymo_like; nuscenes_like halves the scan density (32-beam pattern).
inline DomainSpec preset(const std::string& name) {
  DomainSpec spec;
  spec.id_prefix = name;
  if (name == "waymo_like") {
    spec.domain = DomainTag::kSource;
    return spec;
  }
  if (name == "kitti_like") {
    spec.length_scale = 0.88;
    spec.width_scale = 0.90;
    spec.height_scale = 0.95;
    spec.domain = DomainTag::kTarget;
    return spec;
  }
  if (name == "nuscenes_like") {
    spec.beam_count = 32;
    spec.points_per_object_base /= 2.0;
    spec.domain = DomainTag::kTarget;
    return spec;
  }
  throw std::invalid_argument(
      "unknown preset '" + name +
      "' (valid: waymo_like, kitti_like, nuscenes_like)");
}

}  // namespace gpa3d
