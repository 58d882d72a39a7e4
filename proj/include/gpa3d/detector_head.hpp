#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpa3d/bev_encoder.hpp"
#include "gpa3d/geometry.hpp"
#include "gpa3d/matrix.hpp"
#include "gpa3d/parallel.hpp"
#include "gpa3d/rng.hpp"

namespace gpa3d {

// Regression channels per cell: center offsets (in cells), cz (in cells),
// log dims, and the yaw encoded as (sin, cos) to dodge the wrap-around.
inline constexpr int kRegDim = 8;

struct HeadParams {
  std::vector<double> cls_weight;  // feature_dim
  double cls_bias = 0.0;
  Matrix reg_weight;               // kRegDim x feature_dim
  std::vector<double> reg_bias;    // kRegDim
};

inline HeadParams init_head(int feature_dim, Rng& rng) {
  HeadParams p;
  p.cls_weight.assign(feature_dim, 0.0);
  for (double& v : p.cls_weight) v = rng.normal(0.0, 0.1);
  p.cls_bias = 0.0;
  p.reg_weight = Matrix(kRegDim, feature_dim);
  for (double& v : p.reg_weight.a) v = rng.normal(0.0, 0.1);
  p.reg_bias.assign(kRegDim, 0.0);
  return p;
}

struct HeadOutput {
  int cells = 0;
  std::vector<double> logits;  // cells
  std::vector<double> reg;     // cells x kRegDim
};

inline HeadOutput head_forward(const BevFeatureMap& map, const HeadParams& params) {
  const int n = map.grid.cells();
  const int fd = map.feature_dim;
  if (static_cast<int>(params.cls_weight.size()) != fd ||
      params.reg_weight.cols != fd) {
    throw std::invalid_argument("head parameter shape mismatch");
  }
  HeadOutput out;
  out.cells = n;
  out.logits.assign(n, 0.0);
  out.reg.assign(static_cast<std::size_t>(n) * kRegDim, 0.0);
  for (int c = 0; c < n; ++c) {
    const double* f = map.cell_features(c);
    double logit = params.cls_bias;
    for (int i = 0; i < fd; ++i) logit += params.cls_weight[i] * f[i];
    out.logits[c] = logit;
    double* r = &out.reg[static_cast<std::size_t>(c) * kRegDim];
    for (int k = 0; k < kRegDim; ++k) {
      double acc = params.reg_bias[k];
      const double* w = &params.reg_weight.a[static_cast<std::size_t>(k) * fd];
      for (int i = 0; i < fd; ++i) acc += w[i] * f[i];
      r[k] = acc;
    }
  }
  return out;
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

inline std::array<double, kRegDim> encode_box_targets(const Box3D& box, double cell_x,
                                                      double cell_y,
                                                      double cell_size) {
  return {(box.cx - cell_x) / cell_size,
          (box.cy - cell_y) / cell_size,
          box.cz / cell_size,
          std::log(box.h),
          std::log(box.w),
          std::log(box.l),
          std::sin(box.yaw),
          std::cos(box.yaw)};
}

inline Box3D decode_box_targets(const double* reg, double cell_x, double cell_y,
                                double cell_size) {
  Box3D box;
  box.cx = cell_x + reg[0] * cell_size;
  box.cy = cell_y + reg[1] * cell_size;
  box.cz = reg[2] * cell_size;
  box.h = std::exp(std::clamp(reg[3], -8.0, 8.0));
  box.w = std::exp(std::clamp(reg[4], -8.0, 8.0));
  box.l = std::exp(std::clamp(reg[5], -8.0, 8.0));
  box.yaw = (reg[6] == 0.0 && reg[7] == 0.0) ? 0.0 : std::atan2(reg[6], reg[7]);
  return box;
}

// Cell-wise training targets for a labeled scene; shares the projection rule
// with extract_sequences.
struct CellTargets {
  CellAssignment assignment;
  std::vector<double> targets;  // cells x kRegDim, valid on foreground cells
};

inline CellTargets detection_targets(const BevGrid& grid,
                                     const std::vector<Box3D>& boxes) {
  CellTargets tg;
  tg.assignment = project_boxes_to_cells(grid, boxes);
  tg.targets.assign(static_cast<std::size_t>(grid.cells()) * kRegDim, 0.0);
  for (int c = 0; c < grid.cells(); ++c) {
    const int b = tg.assignment.box_of_cell[c];
    if (b < 0) continue;
    const int i = c / grid.width, j = c % grid.width;
    const auto enc = encode_box_targets(boxes[b], grid.cell_center_x(i),
                                        grid.cell_center_y(j), grid.cell_size);
    std::copy(enc.begin(), enc.end(),
              tg.targets.begin() + static_cast<std::size_t>(c) * kRegDim);
  }
  return tg;
}

namespace head_detail {

inline double smooth_l1(double x) {
  const double ax = std::abs(x);
  return ax < 1.0 ? 0.5 * x * x : ax - 0.5;
}

inline double smooth_l1_grad(double x) {
  return x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
}

// Numerically stable binary cross entropy of a logit against y in {0,1}.
inline double bce(double logit, double y) {
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

}  // namespace head_detail

struct DetectionLoss {
  double total = 0.0;
  double cls = 0.0;
  double reg = 0.0;
  std::vector<double> d_logits;
  std::vector<double> d_reg;
};

// Classification is mean BCE over all cells against the foreground mask;
// regression is mean smooth-L1 over foreground cells of the encoded
// residuals. An optional per-cell mask scales each cell's contribution (and
// its gradient) before the averages are taken; denominators stay fixed so a
// zero mask removes a cell entirely.
inline DetectionLoss detection_loss_on_outputs(
    const HeadOutput& out, const CellTargets& tg,
    const std::vector<double>* mask_values = nullptr) {
  const int n = out.cells;
  if (mask_values && static_cast<int>(mask_values->size()) != n) {
    throw std::invalid_argument("mask shape mismatch");
  }
  DetectionLoss loss;
  loss.d_logits.assign(n, 0.0);
  loss.d_reg.assign(static_cast<std::size_t>(n) * kRegDim, 0.0);
  const double inv_cells = 1.0 / static_cast<double>(n);
  const int n_fg = tg.assignment.fg_count;
  const double inv_fg = n_fg > 0 ? 1.0 / static_cast<double>(n_fg) : 0.0;
  for (int c = 0; c < n; ++c) {
    const double m = mask_values ? (*mask_values)[c] : 1.0;
    const bool fg = tg.assignment.box_of_cell[c] >= 0;
    const double y = fg ? 1.0 : 0.0;
    loss.cls += m * head_detail::bce(out.logits[c], y) * inv_cells;
    loss.d_logits[c] = m * (sigmoid(out.logits[c]) - y) * inv_cells;
    if (!fg) continue;
    const double* pred = &out.reg[static_cast<std::size_t>(c) * kRegDim];
    const double* tgt = &tg.targets[static_cast<std::size_t>(c) * kRegDim];
    double* d = &loss.d_reg[static_cast<std::size_t>(c) * kRegDim];
    for (int k = 0; k < kRegDim; ++k) {
      const double r = pred[k] - tgt[k];
      loss.reg += m * head_detail::smooth_l1(r) * inv_fg;
      d[k] = m * head_detail::smooth_l1_grad(r) * inv_fg;
    }
  }
  loss.total = loss.cls + loss.reg;
  return loss;
}

struct HeadGrads {
  std::vector<double> d_cls_weight;
  double d_cls_bias = 0.0;
  Matrix d_reg_weight;
  std::vector<double> d_reg_bias;
};

struct HeadBackward {
  HeadGrads head;
  std::vector<double> d_features;  // cells x feature_dim
};

inline HeadBackward head_backward(const BevFeatureMap& map, const HeadParams& params,
                                  const std::vector<double>& d_logits,
                                  const std::vector<double>& d_reg) {
  const int n = map.grid.cells();
  const int fd = map.feature_dim;
  HeadBackward back;
  back.head.d_cls_weight.assign(fd, 0.0);
  back.head.d_reg_weight = Matrix(kRegDim, fd);
  back.head.d_reg_bias.assign(kRegDim, 0.0);
  back.d_features.assign(static_cast<std::size_t>(n) * fd, 0.0);
  for (int c = 0; c < n; ++c) {
    const double* f = map.cell_features(c);
    double* df = &back.d_features[static_cast<std::size_t>(c) * fd];
    const double dl = d_logits[c];
    if (dl != 0.0) {
      back.head.d_cls_bias += dl;
      for (int i = 0; i < fd; ++i) {
        back.head.d_cls_weight[i] += dl * f[i];
        df[i] += dl * params.cls_weight[i];
      }
    }
    const double* dr = &d_reg[static_cast<std::size_t>(c) * kRegDim];
    for (int k = 0; k < kRegDim; ++k) {
      if (dr[k] == 0.0) continue;
      back.head.d_reg_bias[k] += dr[k];
      double* wrow = &back.head.d_reg_weight.a[static_cast<std::size_t>(k) * fd];
      const double* prow = &params.reg_weight.a[static_cast<std::size_t>(k) * fd];
      for (int i = 0; i < fd; ++i) {
        wrow[i] += dr[k] * f[i];
        df[i] += dr[k] * prow[i];
      }
    }
  }
  return back;
}

struct Detection {
  Box3D box;
  double score = 0.0;
};

// Thresholded decoding with greedy rotated-IoU NMS. Ties in score break on
// cell index so the output order is reproducible.
inline std::vector<Detection> decode(const HeadOutput& out, const BevGrid& grid,
                                     double score_threshold, double nms_iou = 0.3) {
  if (score_threshold < 0.0 || score_threshold > 1.0 || nms_iou < 0.0 ||
      nms_iou > 1.0) {
    throw std::invalid_argument("thresholds must lie in [0, 1]");
  }
  struct Candidate {
    double score;
    int cell;
    Box3D box;
  };
  std::vector<Candidate> candidates;
  for (int c = 0; c < out.cells; ++c) {
    const double score = sigmoid(out.logits[c]);
    if (score < score_threshold) continue;
    const int i = c / grid.width, j = c % grid.width;
    Box3D box =
        decode_box_targets(&out.reg[static_cast<std::size_t>(c) * kRegDim],
                           grid.cell_center_x(i), grid.cell_center_y(j),
                           grid.cell_size);
    box.score = score;
    candidates.push_back({score, c, box});
  }
  std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.cell < b.cell;
  });
  std::vector<Detection> kept;
  for (const Candidate& cand : candidates) {
    bool suppressed = false;
    for (const Detection& d : kept) {
      if (bev_iou(d.box, cand.box) > nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back({cand.box, cand.score});
  }
  return kept;
}

// The full toy detector: grid geometry plus encoder and head parameters.
struct DetectorModel {
  BevGrid grid;
  EncoderParams encoder;
  HeadParams head;

  int feature_dim() const { return encoder.feature_dim(); }
};

inline DetectorModel init_detector(const BevGrid& grid, int feature_dim,
                                   std::uint64_t seed) {
  Rng rng = make_stream(seed, stream::kParamInit);
  DetectorModel model;
  model.grid = grid;
  model.encoder = init_encoder(feature_dim, rng);
  model.head = init_head(feature_dim, rng);
  return model;
}

inline BevFeatureMap forward_features(const DetectorModel& model, const Scene& scene) {
  return encode(model.grid, rasterize(scene, model.grid), model.encoder);
}

inline std::vector<Detection> detect(const DetectorModel& model, const Scene& scene,
                                     double score_threshold, double nms_iou = 0.3) {
  const BevFeatureMap map = forward_features(model, scene);
  return decode(head_forward(map, model.head), model.grid, score_threshold, nms_iou);
}

// Pseudo-labels per scene id, scores attached. Everything scoring at or
// above `score_threshold` (0.2 by default elsewhere) is kept.
using PseudoLabelStore = std::map<std::string, std::vector<Box3D>>;

inline PseudoLabelStore generate_pseudo_labels(const DetectorModel& model,
                                               const std::vector<Scene>& scenes,
                                               double score_threshold,
                                               double nms_iou = 0.3,
                                               int workers = 1) {
  std::vector<std::vector<Box3D>> per_scene(scenes.size());
  parallel_for_indexed(static_cast<int>(scenes.size()), workers, [&](int i) {
    for (const Detection& d : detect(model, scenes[i], score_threshold, nms_iou)) {
      Box3D box = d.box;
      box.score = d.score;
      per_scene[i].push_back(box);
    }
  });
  PseudoLabelStore store;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    store[scenes[i].id] = std::move(per_scene[i]);
  }
  return store;
}

}  // namespace gpa3d
