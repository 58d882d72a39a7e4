#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "gpa3d/geometry.hpp"
#include "gpa3d/prototypes.hpp"

namespace gpa3d {

inline constexpr int kRecallPositions = 40;

struct PrPoint {
  double recall = 0.0;
  double precision = 0.0;
  double score = 0.0;
};

// Result of one AP evaluation. `ap` is in percent and absent when there is
// no ground truth to recall.
struct EvalResult {
  std::optional<double> ap;
  double iou_threshold = 0.5;
  std::vector<PrPoint> curve;
  int matched = 0;
  int false_positives = 0;
  int missed = 0;
  int gt_count = 0;
  int det_count = 0;
};

// Average precision interpolated at 40 equally spaced recall positions.
// Detections are ranked by score across scenes; each is greedily matched to
// the best-IoU unmatched ground-truth box of its scene, counting a true
// positive iff that IoU reaches the threshold.
inline EvalResult ap_r40(const std::vector<std::vector<Box3D>>& detections,
                         const std::vector<std::vector<Box3D>>& ground_truth,
                         double iou_threshold) {
  if (detections.size() != ground_truth.size()) {
    throw std::invalid_argument("detections and ground truth differ in scene count");
  }
  if (iou_threshold <= 0.0 || iou_threshold >= 1.0) {
    throw std::invalid_argument("iou threshold must lie in (0, 1)");
  }
  EvalResult result;
  result.iou_threshold = iou_threshold;
  for (const auto& gts : ground_truth) result.gt_count += static_cast<int>(gts.size());
  struct Ranked {
    double score;
    int scene;
    int index;
  };
  std::vector<Ranked> ranked;
  for (std::size_t s = 0; s < detections.size(); ++s) {
    for (std::size_t d = 0; d < detections[s].size(); ++d) {
      if (!detections[s][d].score) {
        throw std::invalid_argument("detection without a score");
      }
      ranked.push_back({*detections[s][d].score, static_cast<int>(s),
                        static_cast<int>(d)});
    }
  }
  result.det_count = static_cast<int>(ranked.size());
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });

  std::vector<std::vector<bool>> gt_used(ground_truth.size());
  for (std::size_t s = 0; s < ground_truth.size(); ++s) {
    gt_used[s].assign(ground_truth[s].size(), false);
  }
  if (result.gt_count == 0) {
    result.false_positives = result.det_count;
    return result;  // AP undefined without ground truth
  }

  int tp = 0, fp = 0;
  result.curve.reserve(ranked.size());
  for (const Ranked& r : ranked) {
    const auto& gts = ground_truth[r.scene];
    double best_iou = 0.0;
    int best = -1;
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (gt_used[r.scene][g]) continue;
      const double iou = bev_iou(detections[r.scene][r.index], gts[g]);
      if (iou > best_iou) {
        best_iou = iou;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0 && best_iou >= iou_threshold) {
      gt_used[r.scene][best] = true;
      ++tp;
    } else {
      ++fp;
    }
    result.curve.push_back({static_cast<double>(tp) / result.gt_count,
                            static_cast<double>(tp) / (tp + fp), r.score});
  }
  result.matched = tp;
  result.false_positives = fp;
  result.missed = result.gt_count - tp;

  double ap_sum = 0.0;
  for (int i = 1; i <= kRecallPositions; ++i) {
    const double recall = static_cast<double>(i) / kRecallPositions;
    double best_precision = 0.0;
    for (const PrPoint& p : result.curve) {
      if (p.recall >= recall - 1e-12) {
        best_precision = std::max(best_precision, p.precision);
      }
    }
    ap_sum += best_precision;
  }
  result.ap = 100.0 * ap_sum / kRecallPositions;
  return result;
}

// Normalized adaptation progress relative to the source-only and oracle
// endpoints, in percent. Can exceed 100 or go negative.
inline double closed_gap(double ap_model, double ap_source, double ap_oracle) {
  if (std::abs(ap_oracle - ap_source) < 1e-12) {
    throw std::invalid_argument("closed gap undefined: oracle equals source");
  }
  return (ap_model - ap_source) / (ap_oracle - ap_source) * 100.0;
}

namespace eval_detail {

// Leading eigenvector of a symmetric matrix by power iteration with a
// deterministic start; converges to 1e-8 or 10k iterations.
inline std::vector<double> power_iteration(const std::vector<double>& sym, int dim,
                                           double* eigenvalue) {
  std::vector<double> v(dim, 0.0);
  Rng rng(0x9e11);
  for (double& x : v) x = rng.normal();
  double norm = std::sqrt(proto_detail::dot(v, v));
  for (double& x : v) x /= norm;
  std::vector<double> next(dim, 0.0);
  double lambda = 0.0;
  for (int iter = 0; iter < 10000; ++iter) {
    for (int i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (int j = 0; j < dim; ++j) acc += sym[static_cast<std::size_t>(i) * dim + j] * v[j];
      next[i] = acc;
    }
    lambda = std::sqrt(proto_detail::dot(next, next));
    if (lambda < 1e-14) {
      if (eigenvalue) *eigenvalue = 0.0;
      return std::vector<double>(dim, 0.0);
    }
    for (double& x : next) x /= lambda;
    double delta = 0.0;
    for (int i = 0; i < dim; ++i) delta += std::abs(next[i] - v[i]);
    // Sign flips oscillate for negative eigenvalues; compare both parities.
    double delta_flip = 0.0;
    for (int i = 0; i < dim; ++i) delta_flip += std::abs(next[i] + v[i]);
    v = next;
    if (std::min(delta, delta_flip) < 1e-8) break;
  }
  if (eigenvalue) *eigenvalue = lambda;
  return v;
}

inline void fix_sign(std::vector<double>& v) {
  for (double x : v) {
    if (std::abs(x) > 1e-12) {
      if (x < 0.0) {
        for (double& y : v) y = -y;
      }
      return;
    }
  }
}

}  // namespace eval_detail

// Mean-centered projection onto the top-2 principal directions. Deterministic
// twin of the usual stochastic embedding plots: same seeds give the same
// picture, and exact when the data is genuinely 2-D.
inline std::vector<std::array<double, 2>> project_2d(
    const std::vector<std::vector<double>>& features) {
  const int n = static_cast<int>(features.size());
  if (n < 2) throw std::invalid_argument("projection needs at least 2 rows");
  const int dim = static_cast<int>(features[0].size());
  std::vector<double> mean(dim, 0.0);
  for (const auto& f : features) {
    for (int j = 0; j < dim; ++j) mean[j] += f[j] / n;
  }
  std::vector<double> cov(static_cast<std::size_t>(dim) * dim, 0.0);
  for (const auto& f : features) {
    for (int i = 0; i < dim; ++i) {
      const double di = f[i] - mean[i];
      for (int j = i; j < dim; ++j) {
        cov[static_cast<std::size_t>(i) * dim + j] += di * (f[j] - mean[j]) / n;
      }
    }
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < i; ++j) {
      cov[static_cast<std::size_t>(i) * dim + j] =
          cov[static_cast<std::size_t>(j) * dim + i];
    }
  }
  double lambda1 = 0.0;
  std::vector<double> v1 = eval_detail::power_iteration(cov, dim, &lambda1);
  // Deflate and repeat for the second direction.
  std::vector<double> deflated = cov;
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      deflated[static_cast<std::size_t>(i) * dim + j] -= lambda1 * v1[i] * v1[j];
    }
  }
  double lambda2 = 0.0;
  std::vector<double> v2 = eval_detail::power_iteration(deflated, dim, &lambda2);
  eval_detail::fix_sign(v1);
  eval_detail::fix_sign(v2);
  std::vector<std::array<double, 2>> out(n);
  for (int r = 0; r < n; ++r) {
    double a = 0.0, b = 0.0;
    for (int j = 0; j < dim; ++j) {
      const double centered = features[r][j] - mean[j];
      a += centered * v1[j];
      b += centered * v2[j];
    }
    out[r] = {a, b};
  }
  return out;
}

// Mean silhouette coefficient under cosine distance (1 - cosine similarity).
// Singleton clusters contribute s = 0 via the a(i) = 0 convention.
inline double silhouette(const std::vector<std::vector<double>>& features,
                         const std::vector<int>& labels) {
  const std::size_t n = features.size();
  if (labels.size() != n) throw std::invalid_argument("label count mismatch");
  std::vector<int> groups;
  for (int l : labels) {
    if (std::find(groups.begin(), groups.end(), l) == groups.end()) {
      groups.push_back(l);
    }
  }
  if (groups.size() < 2) {
    throw std::invalid_argument("silhouette needs at least 2 groups");
  }
  auto distance = [&](std::size_t i, std::size_t j) {
    return 1.0 - proto_detail::sim_clamped(features[i], features[j]);
  };
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double intra_sum = 0.0;
    std::size_t intra_count = 0;
    // mean distance to each other group, keyed by group order
    std::vector<double> inter_sum(groups.size(), 0.0);
    std::vector<std::size_t> inter_count(groups.size(), 0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (labels[j] == labels[i]) {
        intra_sum += distance(i, j);
        ++intra_count;
      } else {
        const auto g = std::find(groups.begin(), groups.end(), labels[j]) -
                       groups.begin();
        inter_sum[g] += distance(i, j);
        ++inter_count[g];
      }
    }
    const double a = intra_count > 0 ? intra_sum / intra_count : 0.0;
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < groups.size(); ++g) {
      if (inter_count[g] > 0) b = std::min(b, inter_sum[g] / inter_count[g]);
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

}  // namespace gpa3d
