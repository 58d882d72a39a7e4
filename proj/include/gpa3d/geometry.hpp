#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpa3d {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Oriented 3D bounding box in the sensor frame (x forward, y left, z up,
// origin at the sensor). Dimensions h/w/l are full extents; l runs along the
// heading axis, w across it. `score` is absent on ground-truth boxes.
struct Box3D {
  double cx = 0.0, cy = 0.0, cz = 0.0;
  double h = 0.0, w = 0.0, l = 0.0;
  double yaw = 0.0;
  std::optional<double> score;
};

struct Point {
  double x = 0.0, y = 0.0, z = 0.0;
  double intensity = 0.0;
};

enum class DomainTag { kSource, kTarget };

// One point cloud frame. `boxes` carries ground truth on the source domain
// and pseudo-labels on the target domain.
struct Scene {
  std::string id;
  DomainTag domain = DomainTag::kSource;
  std::vector<Point> points;
  std::vector<Box3D> boxes;
};

struct GroupAssignment {
  std::size_t box_index = 0;
  double offset_angle = 0.0;  // [0, 2*pi)
  int group_index = 1;        // [1, K]
};

// Wraps an angle into [0, 2*pi). Half-open so the group index below stays in
// range for inputs arbitrarily close to a full turn.
inline double norm_two_pi(double angle) {
  double wrapped = std::fmod(angle, kTwoPi);
  if (wrapped < 0.0) wrapped += kTwoPi;
  if (wrapped >= kTwoPi) wrapped = 0.0;
  return wrapped;
}

// Wraps an angle into [-pi, pi).
inline double norm_pi(double angle) {
  return norm_two_pi(angle + std::numbers::pi) - std::numbers::pi;
}

// Bird's-eye-view bearing of the box center seen from the sensor origin.
inline double observation_angle(const Box3D& box) {
  if (box.cx == 0.0 && box.cy == 0.0) {
    throw std::domain_error("observation angle undefined at sensor origin");
  }
  return std::atan2(box.cy, box.cx);
}

// Observation angle minus heading, wrapped into [0, 2*pi). Boxes with equal
// offset angle expose the same faces to the sensor.
inline double offset_angle(const Box3D& box) {
  return norm_two_pi(observation_angle(box) - box.yaw);
}

// Bucket of the offset angle among K equal angular intervals, in [1, K].
// The clamp guards the floating-point case where offset/delta rounds up to
// exactly K.
inline int group_index(const Box3D& box, int k_groups) {
  if (k_groups < 1) throw std::invalid_argument("group count must be >= 1");
  const double delta = kTwoPi / static_cast<double>(k_groups);
  const int q = static_cast<int>(std::floor(offset_angle(box) / delta)) + 1;
  return std::clamp(q, 1, k_groups);
}

// Cyclically adjacent groups: group 1 and group K border each other because
// the offset angle is periodic. K = 1 has no neighbours; K = 2 has one.
inline std::set<int> adjacent_groups(int q, int k_groups) {
  if (q < 1 || q > k_groups) throw std::invalid_argument("group index out of range");
  if (k_groups <= 1) return {};
  if (k_groups == 2) return {q == 1 ? 2 : 1};
  const int prev = q == 1 ? k_groups : q - 1;
  const int next = q == k_groups ? 1 : q + 1;
  return {prev, next};
}

struct Vec2 {
  double x = 0.0, y = 0.0;
};

// Corners of the BEV rectangle, counter-clockwise.
inline std::array<Vec2, 4> bev_corners(const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double hl = 0.5 * box.l, hw = 0.5 * box.w;
  std::array<Vec2, 4> corners{};
  const double lx[4] = {hl, -hl, -hl, hl};
  const double ly[4] = {hw, hw, -hw, -hw};
  for (int i = 0; i < 4; ++i) {
    corners[i] = {box.cx + c * lx[i] - s * ly[i], box.cy + s * lx[i] + c * ly[i]};
  }
  return corners;
}

inline double polygon_area(const std::vector<Vec2>& poly) {
  if (poly.size() < 3) return 0.0;
  double twice_area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    twice_area += a.x * b.y - b.x * a.y;
  }
  return 0.5 * std::abs(twice_area);
}

namespace detail {

// Sutherland-Hodgman clip of `poly` against the half-plane left of the
// directed edge (e0, e1). Points within 1e-9 of the edge count as inside so
// coincident rectangles keep their full boundary.
inline std::vector<Vec2> clip_half_plane(const std::vector<Vec2>& poly, Vec2 e0,
                                         Vec2 e1) {
  constexpr double kEps = 1e-9;
  const double ex = e1.x - e0.x, ey = e1.y - e0.y;
  auto side = [&](const Vec2& p) { return ex * (p.y - e0.y) - ey * (p.x - e0.x); };
  std::vector<Vec2> out;
  out.reserve(poly.size() + 1);
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& cur = poly[i];
    const Vec2& nxt = poly[(i + 1) % poly.size()];
    const double sc = side(cur), sn = side(nxt);
    if (sc >= -kEps) out.push_back(cur);
    if ((sc > kEps && sn < -kEps) || (sc < -kEps && sn > kEps)) {
      const double t = sc / (sc - sn);
      out.push_back({cur.x + t * (nxt.x - cur.x), cur.y + t * (nxt.y - cur.y)});
    }
  }
  return out;
}

}  // namespace detail

// Intersection area of two rotated BEV rectangles.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
  const auto ca = bev_corners(a);
  const auto cb = bev_corners(b);
  std::vector<Vec2> poly(ca.begin(), ca.end());
  for (int i = 0; i < 4 && !poly.empty(); ++i) {
    poly = detail::clip_half_plane(poly, cb[i], cb[(i + 1) % 4]);
  }
  return polygon_area(poly);
}

// Exact IoU of the rotated BEV rectangles via polygon clipping.
inline double bev_iou(const Box3D& a, const Box3D& b) {
  const double inter = bev_intersection_area(a, b);
  if (inter < 1e-12) return 0.0;
  const double area_a = a.l * a.w;
  const double area_b = b.l * b.w;
  const double uni = area_a + area_b - inter;
  if (uni < 1e-12) return 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

// BEV containment test against the rotated rectangle.
inline bool point_in_box_bev(double x, double y, const Box3D& box) {
  const double c = std::cos(box.yaw), s = std::sin(box.yaw);
  const double dx = x - box.cx, dy = y - box.cy;
  const double local_x = c * dx + s * dy;
  const double local_y = -s * dx + c * dy;
  return std::abs(local_x) <= 0.5 * box.l && std::abs(local_y) <= 0.5 * box.w;
}

inline bool point_in_box(const Point& p, const Box3D& box) {
  return std::abs(p.z - box.cz) <= 0.5 * box.h && point_in_box_bev(p.x, p.y, box);
}

inline std::vector<GroupAssignment> assign_groups(const std::vector<Box3D>& boxes,
                                                  int k_groups) {
  std::vector<GroupAssignment> out;
  out.reserve(boxes.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    out.push_back({i, offset_angle(boxes[i]), group_index(boxes[i], k_groups)});
  }
  return out;
}

}  // namespace gpa3d
