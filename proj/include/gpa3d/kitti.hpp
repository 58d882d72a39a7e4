#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpa3d/geometry.hpp"

namespace gpa3d {

// One row of a KITTI label_2 text file: 15 whitespace-separated fields.
// Locations are in the camera frame (x right, y down, z forward).
struct KittiLabelLine {
  std::string type;
  double truncated = 0.0;
  int occluded = 0;
  double alpha = 0.0;
  double bbox2d[4] = {0.0, 0.0, 0.0, 0.0};
  double h = 0.0, w = 0.0, l = 0.0;
  double x = 0.0, y = 0.0, z = 0.0;
  double rotation_y = 0.0;

  bool dont_care() const { return type == "DontCare"; }
};

namespace kitti_detail {

inline double parse_number(const std::string& token, std::size_t line_no) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc{} || ptr != end) {
    throw std::runtime_error("label line " + std::to_string(line_no) +
                             ": non-numeric field '" + token + "'");
  }
  return value;
}

}  // namespace kitti_detail

// Parses a label file body. Empty lines are skipped; any malformed line
// aborts with its 1-based line number.
inline std::vector<KittiLabelLine> parse_labels(const std::string& text) {
  std::vector<KittiLabelLine> labels;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream fields(line);
    std::vector<std::string> tokens;
    std::string token;
    while (fields >> token) tokens.push_back(token);
    if (tokens.empty()) continue;
    if (tokens.size() != 15) {
      throw std::runtime_error("label line " + std::to_string(line_no) + ": expected 15 fields, got " +
                               std::to_string(tokens.size()));
    }
    KittiLabelLine label;
    label.type = tokens[0];
    label.truncated = kitti_detail::parse_number(tokens[1], line_no);
    label.occluded =
        static_cast<int>(kitti_detail::parse_number(tokens[2], line_no));
    label.alpha = kitti_detail::parse_number(tokens[3], line_no);
    for (int i = 0; i < 4; ++i) {
      label.bbox2d[i] = kitti_detail::parse_number(tokens[4 + i], line_no);
    }
    label.h = kitti_detail::parse_number(tokens[8], line_no);
    label.w = kitti_detail::parse_number(tokens[9], line_no);
    label.l = kitti_detail::parse_number(tokens[10], line_no);
    label.x = kitti_detail::parse_number(tokens[11], line_no);
    label.y = kitti_detail::parse_number(tokens[12], line_no);
    label.z = kitti_detail::parse_number(tokens[13], line_no);
    label.rotation_y = kitti_detail::parse_number(tokens[14], line_no);
    if (!label.dont_care() && (label.h <= 0.0 || label.w <= 0.0 || label.l <= 0.0)) {
      throw std::runtime_error("label line " + std::to_string(line_no) +
                               ": non-positive dimensions");
    }
    labels.push_back(std::move(label));
  }
  return labels;
}

// Camera frame (x right, y down, z forward) to sensor frame (x forward,
// y left, z up); the camera y sits at the box bottom, the sensor cz at its
// center.
inline Box3D to_box3d(const KittiLabelLine& label) {
  if (label.dont_care()) {
    throw std::invalid_argument("DontCare rows carry no usable box");
  }
  Box3D box;
  box.cx = label.z;
  box.cy = -label.x;
  box.cz = -label.y + 0.5 * label.h;
  box.h = label.h;
  box.w = label.w;
  box.l = label.l;
  box.yaw = norm_pi(-label.rotation_y - std::numbers::pi / 2.0);
  return box;
}

// Inverse of to_box3d for the Car class; bbox2d/truncation are not
// recoverable and are zeroed.
inline KittiLabelLine from_box3d(const Box3D& box, const std::string& type = "Car") {
  KittiLabelLine label;
  label.type = type;
  label.h = box.h;
  label.w = box.w;
  label.l = box.l;
  label.x = -box.cy;
  label.y = -(box.cz - 0.5 * box.h);
  label.z = box.cx;
  label.rotation_y = norm_pi(-box.yaw - std::numbers::pi / 2.0);
  return label;
}

// Two-decimal serialization, matching the published label files.
inline std::string serialize_labels(const std::vector<KittiLabelLine>& labels) {
  std::string out;
  char buf[256];
  for (const KittiLabelLine& label : labels) {
    std::snprintf(buf, sizeof(buf),
                  "%s %.2f %d %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f %.2f "
                  "%.2f %.2f\n",
                  label.type.c_str(), label.truncated, label.occluded, label.alpha,
                  label.bbox2d[0], label.bbox2d[1], label.bbox2d[2], label.bbox2d[3],
                  label.h, label.w, label.l, label.x, label.y, label.z,
                  label.rotation_y);
    out += buf;
  }
  return out;
}

// Group occupancy over a set of boxes; bins are 1-based group indices.
inline std::vector<std::size_t> group_histogram(const std::vector<Box3D>& boxes,
                                                int k_groups) {
  if (k_groups < 1) throw std::invalid_argument("k_groups must be >= 1");
  std::vector<std::size_t> histogram(k_groups, 0);
  for (const Box3D& box : boxes) {
    ++histogram[group_index(box, k_groups) - 1];
  }
  return histogram;
}

}  // namespace gpa3d
