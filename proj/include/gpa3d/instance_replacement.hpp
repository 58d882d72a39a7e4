#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpa3d/detector_head.hpp"
#include "gpa3d/geometry.hpp"
#include "gpa3d/rng.hpp"

namespace gpa3d {

// One bankable high-quality instance: its box, and its points rotated and
// translated into the box frame (center at origin, heading along +x).
struct IraEntry {
  Box3D box;
  std::vector<Point> local_points;
  std::string source_scene;
};

struct IraDatabase {
  int k_groups = 0;
  std::vector<std::vector<IraEntry>> buckets;  // index 0 = group 1
  std::size_t skipped_empty = 0;               // boxes with no interior points

  bool empty() const {
    for (const auto& b : buckets) {
      if (!b.empty()) return false;
    }
    return true;
  }
  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& b : buckets) n += b.size();
    return n;
  }
};

struct IraConfig {
  double p_replace = 0.25;
  double band_low = 0.2;   // uncertain score band, inclusive
  double band_high = 0.5;
};

namespace ira_detail {

inline Point to_local(const Point& p, const Box3D& box) {
  const double c = std::cos(-box.yaw), s = std::sin(-box.yaw);
  const double dx = p.x - box.cx, dy = p.y - box.cy;
  return {c * dx - s * dy, s * dx + c * dy, p.z - box.cz, p.intensity};
}

inline Point from_local(const Point& p, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  return {box.cx + c * p.x - s * p.y, box.cy + s * p.x + c * p.y, box.cz + p.z,
          p.intensity};
}

}  // namespace ira_detail

// Collects pseudo-labels scoring strictly above `min_score` into per-group
// buckets, cropping each instance's points into the box frame. Boxes with no
// interior points are counted and skipped.
inline IraDatabase build_database(const PseudoLabelStore& store,
                                  const std::vector<Scene>& scenes, int k_groups,
                                  double min_score = 0.5) {
  if (k_groups < 1) throw std::invalid_argument("k_groups must be >= 1");
  IraDatabase db;
  db.k_groups = k_groups;
  db.buckets.assign(k_groups, {});
  for (const Scene& scene : scenes) {
    const auto it = store.find(scene.id);
    if (it == store.end()) continue;
    for (const Box3D& box : it->second) {
      if (!box.score || !(*box.score > min_score)) continue;
      IraEntry entry;
      entry.box = box;
      entry.source_scene = scene.id;
      for (const Point& p : scene.points) {
        if (point_in_box(p, box)) {
          entry.local_points.push_back(ira_detail::to_local(p, box));
        }
      }
      if (entry.local_points.empty()) {
        ++db.skipped_empty;
        continue;
      }
      db.buckets[group_index(box, k_groups) - 1].push_back(std::move(entry));
    }
  }
  return db;
}

// Replaces uncertain pseudo-labels (score inside the band) with probability
// p_replace by a random donor from the same geometric group. The original
// center and yaw are kept, so the spatial context and the group index are
// untouched; the donor contributes its points, dimensions and score. Box
// count never changes; empty buckets skip silently.
inline Scene replace_instances(const Scene& scene, const IraDatabase& db,
                               const IraConfig& cfg, Rng& rng) {
  if (cfg.band_low < 0.0 || cfg.band_high > 1.0 || cfg.band_low > cfg.band_high) {
    throw std::invalid_argument("uncertain band must lie within [0, 1]");
  }
  Scene out = scene;
  for (std::size_t b = 0; b < out.boxes.size(); ++b) {
    Box3D& box = out.boxes[b];
    if (!box.score || *box.score < cfg.band_low || *box.score > cfg.band_high) {
      continue;
    }
    if (rng.uniform() >= cfg.p_replace) continue;
    const int group = group_index(box, db.k_groups);
    const auto& bucket = db.buckets[group - 1];
    if (bucket.empty()) continue;
    const IraEntry& donor =
        bucket[static_cast<std::size_t>(rng.uniform_int(0, bucket.size() - 1))];

    // Drop the original instance's points, then pose the donor's points at
    // the original center/yaw.
    const Box3D original = box;
    std::vector<Point> kept;
    kept.reserve(out.points.size());
    for (const Point& p : out.points) {
      if (!point_in_box(p, original)) kept.push_back(p);
    }
    Box3D placed = original;
    placed.h = donor.box.h;
    placed.w = donor.box.w;
    placed.l = donor.box.l;
    placed.score = donor.box.score;
    for (const Point& lp : donor.local_points) {
      kept.push_back(ira_detail::from_local(lp, placed));
    }
    out.points = std::move(kept);
    box = placed;
  }
  return out;
}

}  // namespace gpa3d
