#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gpa3d/geometry.hpp"
#include "gpa3d/matrix.hpp"
#include "gpa3d/rng.hpp"

namespace gpa3d {

// Raw per-cell statistic channels produced by rasterize().
inline constexpr int kStatDim = 8;

struct BevGrid {
  double x_min = -12.8, x_max = 12.8;
  double y_min = -12.8, y_max = 12.8;
  double cell_size = 0.8;
  int height = 32;  // cells along x
  int width = 32;   // cells along y

  static BevGrid make(double x_min, double x_max, double y_min, double y_max,
                      double cell_size) {
    if (cell_size <= 0.0) throw std::invalid_argument("cell_size must be positive");
    BevGrid g;
    g.x_min = x_min;
    g.x_max = x_max;
    g.y_min = y_min;
    g.y_max = y_max;
    g.cell_size = cell_size;
    g.height = static_cast<int>(std::ceil((x_max - x_min) / cell_size - 1e-9));
    g.width = static_cast<int>(std::ceil((y_max - y_min) / cell_size - 1e-9));
    if (g.height < 1 || g.width < 1) throw std::invalid_argument("empty grid");
    return g;
  }

  int cells() const { return height * width; }
  int cell_index(int i, int j) const { return i * width + j; }
  double cell_center_x(int i) const { return x_min + (i + 0.5) * cell_size; }
  double cell_center_y(int j) const { return y_min + (j + 0.5) * cell_size; }
};

// Backbone parameters: one affine layer from the kStatDim raw statistics to
// feature_dim channels, squashed by tanh.
struct EncoderParams {
  Matrix weight;              // feature_dim x kStatDim
  std::vector<double> bias;   // feature_dim

  int feature_dim() const { return weight.rows; }
};

// Bias spread matters: cells without points encode as tanh(bias), and the
// classifier can only rank them against occupied cells if that vector has
// usable magnitude.
inline EncoderParams init_encoder(int feature_dim, Rng& rng) {
  EncoderParams p;
  p.weight = Matrix(feature_dim, kStatDim);
  for (double& v : p.weight.a) v = rng.normal(0.0, 0.6);
  p.bias.assign(feature_dim, 0.0);
  for (double& v : p.bias) v = rng.normal(0.0, 0.3);
  return p;
}

// Per-cell point statistics. Channel order:
//   [log(1+count), mean z, max z, mean intensity, std z,
//    mean |x - cell_x|, mean |y - cell_y|, occupancy]
// Cells without points stay all-zero; points outside the grid are dropped.
inline std::vector<double> rasterize(const Scene& scene, const BevGrid& grid) {
  const int n = grid.cells();
  std::vector<double> count(n, 0.0), sum_z(n, 0.0), max_z(n, 0.0), sum_i(n, 0.0),
      sum_z2(n, 0.0), sum_dx(n, 0.0), sum_dy(n, 0.0);
  for (const Point& p : scene.points) {
    if (p.x < grid.x_min || p.x >= grid.x_max || p.y < grid.y_min ||
        p.y >= grid.y_max) {
      continue;
    }
    int i = static_cast<int>((p.x - grid.x_min) / grid.cell_size);
    int j = static_cast<int>((p.y - grid.y_min) / grid.cell_size);
    if (i >= grid.height) i = grid.height - 1;
    if (j >= grid.width) j = grid.width - 1;
    const int c = grid.cell_index(i, j);
    if (count[c] == 0.0 || p.z > max_z[c]) max_z[c] = p.z;
    count[c] += 1.0;
    sum_z[c] += p.z;
    sum_i[c] += p.intensity;
    sum_z2[c] += p.z * p.z;
    sum_dx[c] += std::abs(p.x - grid.cell_center_x(i));
    sum_dy[c] += std::abs(p.y - grid.cell_center_y(j));
  }
  std::vector<double> stats(static_cast<std::size_t>(n) * kStatDim, 0.0);
  for (int c = 0; c < n; ++c) {
    if (count[c] == 0.0) continue;
    const double inv = 1.0 / count[c];
    const double mean_z = sum_z[c] * inv;
    const double var_z = std::max(0.0, sum_z2[c] * inv - mean_z * mean_z);
    double* s = &stats[static_cast<std::size_t>(c) * kStatDim];
    s[0] = std::log(1.0 + count[c]);
    s[1] = mean_z;
    s[2] = max_z[c];
    s[3] = sum_i[c] * inv;
    s[4] = std::sqrt(var_z);
    s[5] = sum_dx[c] * inv;
    s[6] = sum_dy[c] * inv;
    s[7] = 1.0;
  }
  return stats;
}

// BEV feature map with the raw statistics cached for the backward pass.
struct BevFeatureMap {
  BevGrid grid;
  int feature_dim = 0;
  std::vector<double> features;   // cells x feature_dim, tanh(W s + b)
  std::vector<double> raw_stats;  // cells x kStatDim
  std::vector<std::uint8_t> occupancy;

  const double* cell_features(int cell) const {
    return &features[static_cast<std::size_t>(cell) * feature_dim];
  }
};

inline BevFeatureMap encode(const BevGrid& grid, const std::vector<double>& stats,
                            const EncoderParams& params) {
  const int n = grid.cells();
  if (stats.size() != static_cast<std::size_t>(n) * kStatDim) {
    throw std::invalid_argument("stats shape does not match grid");
  }
  BevFeatureMap map;
  map.grid = grid;
  map.feature_dim = params.feature_dim();
  map.features.assign(static_cast<std::size_t>(n) * map.feature_dim, 0.0);
  map.raw_stats = stats;
  map.occupancy.assign(n, 0);
  for (int c = 0; c < n; ++c) {
    const double* s = &stats[static_cast<std::size_t>(c) * kStatDim];
    map.occupancy[c] = s[7] > 0.5 ? 1 : 0;
    double* f = &map.features[static_cast<std::size_t>(c) * map.feature_dim];
    for (int k = 0; k < map.feature_dim; ++k) {
      double acc = params.bias[k];
      const double* w = &params.weight.a[static_cast<std::size_t>(k) * kStatDim];
      for (int d = 0; d < kStatDim; ++d) acc += w[d] * s[d];
      f[k] = std::tanh(acc);
    }
  }
  return map;
}

struct EncoderGrads {
  Matrix d_weight;
  std::vector<double> d_bias;
};

// Exact gradients of a scalar loss through tanh(W s + b), given the loss
// gradient per cell feature. Requires the cached raw statistics.
inline EncoderGrads encode_backward(const BevFeatureMap& map,
                                    const std::vector<double>& d_features) {
  if (map.raw_stats.empty()) {
    throw std::runtime_error("encode_backward: raw statistics cache is missing");
  }
  if (d_features.size() != map.features.size()) {
    throw std::invalid_argument("upstream gradient shape mismatch");
  }
  const int n = map.grid.cells();
  const int fd = map.feature_dim;
  EncoderGrads g;
  g.d_weight = Matrix(fd, kStatDim);
  g.d_bias.assign(fd, 0.0);
  for (int c = 0; c < n; ++c) {
    const double* s = &map.raw_stats[static_cast<std::size_t>(c) * kStatDim];
    const double* f = &map.features[static_cast<std::size_t>(c) * fd];
    const double* up = &d_features[static_cast<std::size_t>(c) * fd];
    for (int k = 0; k < fd; ++k) {
      if (up[k] == 0.0) continue;
      const double pre = up[k] * (1.0 - f[k] * f[k]);
      g.d_bias[k] += pre;
      double* w = &g.d_weight.a[static_cast<std::size_t>(k) * kStatDim];
      for (int d = 0; d < kStatDim; ++d) w[d] += pre * s[d];
    }
  }
  return g;
}

// Cell ownership of projected boxes: for every cell whose center falls inside
// at least one rotated BEV rectangle, the owning box (nearest box center when
// covered twice); -1 elsewhere.
struct CellAssignment {
  std::vector<int> box_of_cell;
  int fg_count = 0;
};

inline CellAssignment project_boxes_to_cells(const BevGrid& grid,
                                             const std::vector<Box3D>& boxes) {
  CellAssignment out;
  out.box_of_cell.assign(grid.cells(), -1);
  std::vector<double> best_dist2(grid.cells(), 0.0);
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const Box3D& box = boxes[b];
    const double reach = 0.5 * std::hypot(box.l, box.w);
    int i_lo = static_cast<int>(std::floor((box.cx - reach - grid.x_min) / grid.cell_size));
    int i_hi = static_cast<int>(std::ceil((box.cx + reach - grid.x_min) / grid.cell_size));
    int j_lo = static_cast<int>(std::floor((box.cy - reach - grid.y_min) / grid.cell_size));
    int j_hi = static_cast<int>(std::ceil((box.cy + reach - grid.y_min) / grid.cell_size));
    i_lo = std::max(i_lo, 0);
    j_lo = std::max(j_lo, 0);
    i_hi = std::min(i_hi, grid.height - 1);
    j_hi = std::min(j_hi, grid.width - 1);
    for (int i = i_lo; i <= i_hi; ++i) {
      for (int j = j_lo; j <= j_hi; ++j) {
        const double cx = grid.cell_center_x(i);
        const double cy = grid.cell_center_y(j);
        if (!point_in_box_bev(cx, cy, box)) continue;
        const int cell = grid.cell_index(i, j);
        const double d2 = (cx - box.cx) * (cx - box.cx) + (cy - box.cy) * (cy - box.cy);
        if (out.box_of_cell[cell] < 0 || d2 < best_dist2[cell]) {
          out.box_of_cell[cell] = static_cast<int>(b);
          best_dist2[cell] = d2;
        }
      }
    }
  }
  for (int v : out.box_of_cell) {
    if (v >= 0) ++out.fg_count;
  }
  return out;
}

// One extracted feature row. `group` is the owning box's group index for
// foreground rows and k_groups+1 for background rows.
struct SequenceRow {
  int cell = 0;
  std::vector<double> feature;
  int group = 0;
  int box_index = -1;
};

struct FeatureSequences {
  std::vector<SequenceRow> fg;
  std::vector<SequenceRow> bg;
  int k_groups = 0;
};

// Foreground rows are every box-covered cell; background rows are an
// equal-length sample split between occupied and unoccupied non-foreground
// cells (topping up from the other pool when one runs short), so the
// background group sees both clutter and genuinely empty space. Only the
// background sample consumes randomness.
inline FeatureSequences extract_sequences(const BevFeatureMap& map,
                                          const std::vector<Box3D>& boxes,
                                          int k_groups, Rng& rng) {
  FeatureSequences seqs;
  seqs.k_groups = k_groups;
  const CellAssignment assignment = project_boxes_to_cells(map.grid, boxes);
  const int n = map.grid.cells();
  const int fd = map.feature_dim;
  for (int c = 0; c < n; ++c) {
    const int b = assignment.box_of_cell[c];
    if (b < 0) continue;
    SequenceRow row;
    row.cell = c;
    row.box_index = b;
    row.group = group_index(boxes[b], k_groups);
    row.feature.assign(map.cell_features(c), map.cell_features(c) + fd);
    seqs.fg.push_back(std::move(row));
  }
  if (seqs.fg.empty()) return seqs;

  std::vector<std::size_t> occupied_bg, empty_bg;
  for (int c = 0; c < n; ++c) {
    if (assignment.box_of_cell[c] >= 0) continue;
    (map.occupancy[c] ? occupied_bg : empty_bg).push_back(c);
  }
  const std::size_t want = seqs.fg.size();
  const std::size_t want_occupied = (want + 1) / 2;
  std::vector<std::size_t> chosen =
      rng.sample_without_replacement(std::move(occupied_bg), want_occupied);
  if (chosen.size() < want) {
    const auto extra =
        rng.sample_without_replacement(std::move(empty_bg), want - chosen.size());
    chosen.insert(chosen.end(), extra.begin(), extra.end());
  }
  for (std::size_t c : chosen) {
    SequenceRow row;
    row.cell = static_cast<int>(c);
    row.group = k_groups + 1;
    row.feature.assign(map.cell_features(static_cast<int>(c)),
                       map.cell_features(static_cast<int>(c)) + fd);
    seqs.bg.push_back(std::move(row));
  }
  return seqs;
}

}  // namespace gpa3d
