#pragma once

// Independent oracles used by the test suites. Everything here recomputes
// expected values by brute force or sampling and must not call into the
// implementation paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gpa3d/geometry.hpp"
#include "gpa3d/rng.hpp"

namespace oracle {

// Membership test written from scratch (rotate into the box frame).
inline bool inside_rect(double x, double y, const gpa3d::Box3D& b) {
  const double c = std::cos(-b.yaw), s = std::sin(-b.yaw);
  const double dx = x - b.cx, dy = y - b.cy;
  const double lx = c * dx - s * dy;
  const double ly = s * dx + c * dy;
  return std::abs(lx) <= 0.5 * b.l && std::abs(ly) <= 0.5 * b.w;
}

// Monte-Carlo IoU of two rotated BEV rectangles: sample the joint bounding
// box, estimate |A&B| / |A|B| from hit counts.
inline double mc_bev_iou(const gpa3d::Box3D& a, const gpa3d::Box3D& b,
                         std::size_t samples, std::uint64_t seed) {
  double x_min = 1e30, x_max = -1e30, y_min = 1e30, y_max = -1e30;
  for (const gpa3d::Box3D* box : {&a, &b}) {
    for (const auto& corner : gpa3d::bev_corners(*box)) {
      x_min = std::min(x_min, corner.x);
      x_max = std::max(x_max, corner.x);
      y_min = std::min(y_min, corner.y);
      y_max = std::max(y_max, corner.y);
    }
  }
  gpa3d::Rng rng(seed);
  std::size_t in_both = 0, in_either = 0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = rng.uniform(x_min, x_max);
    const double y = rng.uniform(y_min, y_max);
    const bool ina = inside_rect(x, y, a);
    const bool inb = inside_rect(x, y, b);
    in_both += (ina && inb) ? 1 : 0;
    in_either += (ina || inb) ? 1 : 0;
  }
  if (in_either == 0) return 0.0;
  return static_cast<double>(in_both) / static_cast<double>(in_either);
}

// Central finite difference of a scalar function at x along one coordinate.
inline double central_difference(const std::function<double(double)>& f, double x,
                                 double h = 1e-4) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Relative-error check that tolerates absolute noise on near-zero gradients:
// central differences of O(1) losses carry ~1e-9 absolute noise, so a 1e-4
// relative bound is meaningless below that scale.
inline bool gradients_match(double analytic, double numeric, double rel_tol = 1e-4,
                            double abs_tol = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_tol) return true;
  return diff <= rel_tol * std::max(std::abs(analytic), std::abs(numeric));
}

// Checks an analytic derivative against the h = 1e-4 central difference.
// When the plain stencil disagrees, a Richardson-extrapolated estimate
// (fourth order, same base step) decides whether the gap is truncation error
// of the stencil or a real gradient defect.
inline bool fd_match(const std::function<double(double)>& f, double x,
                     double analytic, double rel_tol = 1e-4) {
  const double plain = central_difference(f, x, 1e-4);
  if (gradients_match(analytic, plain, rel_tol)) return true;
  const double half = central_difference(f, x, 5e-5);
  const double refined = (4.0 * half - plain) / 3.0;
  return gradients_match(analytic, refined, rel_tol);
}

// Brute-force AP at 40 recall positions: re-runs the greedy matching from
// scratch for every ranked prefix instead of accumulating a single pass.
inline double brute_force_ap_r40(const std::vector<std::vector<gpa3d::Box3D>>& dets,
                                 const std::vector<std::vector<gpa3d::Box3D>>& gts,
                                 double iou_threshold) {
  struct Ranked {
    double score;
    int scene;
    int index;
  };
  std::vector<Ranked> ranked;
  std::size_t gt_total = 0;
  for (const auto& g : gts) gt_total += g.size();
  for (std::size_t s = 0; s < dets.size(); ++s) {
    for (std::size_t d = 0; d < dets[s].size(); ++d) {
      ranked.push_back({dets[s][d].score.value(), static_cast<int>(s),
                        static_cast<int>(d)});
    }
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.scene != b.scene) return a.scene < b.scene;
    return a.index < b.index;
  });

  auto true_positives_in_prefix = [&](std::size_t k) {
    std::vector<std::vector<bool>> used(gts.size());
    for (std::size_t s = 0; s < gts.size(); ++s) used[s].assign(gts[s].size(), false);
    int tp = 0;
    for (std::size_t r = 0; r < k; ++r) {
      const auto& det = dets[ranked[r].scene][ranked[r].index];
      double best_iou = 0.0;
      int best = -1;
      for (std::size_t g = 0; g < gts[ranked[r].scene].size(); ++g) {
        if (used[ranked[r].scene][g]) continue;
        const double iou = gpa3d::bev_iou(det, gts[ranked[r].scene][g]);
        if (iou > best_iou) {
          best_iou = iou;
          best = static_cast<int>(g);
        }
      }
      if (best >= 0 && best_iou >= iou_threshold) {
        used[ranked[r].scene][best] = true;
        ++tp;
      }
    }
    return tp;
  };

  double ap_sum = 0.0;
  for (int i = 1; i <= 40; ++i) {
    const double want_recall = static_cast<double>(i) / 40.0;
    double best_precision = 0.0;
    for (std::size_t k = 1; k <= ranked.size(); ++k) {
      const int tp = true_positives_in_prefix(k);
      const double recall = static_cast<double>(tp) / static_cast<double>(gt_total);
      if (recall >= want_recall - 1e-12) {
        best_precision =
            std::max(best_precision, static_cast<double>(tp) / static_cast<double>(k));
      }
    }
    ap_sum += best_precision;
  }
  return 100.0 * ap_sum / 40.0;
}

// Dense symmetric eigendecomposition by cyclic Jacobi rotations. Returns
// eigenvalues sorted descending.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> m, int dim) {
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < dim; ++i) {
      for (int j = i + 1; j < dim; ++j) off += std::abs(m[i * dim + j]);
    }
    if (off < 1e-13) break;
    for (int p = 0; p < dim; ++p) {
      for (int q = p + 1; q < dim; ++q) {
        const double apq = m[p * dim + q];
        if (std::abs(apq) < 1e-15) continue;
        const double app = m[p * dim + p], aqq = m[q * dim + q];
        const double theta = 0.5 * std::atan2(2.0 * apq, aqq - app);
        const double c = std::cos(theta), s = std::sin(theta);
        for (int k = 0; k < dim; ++k) {
          const double mkp = m[k * dim + p], mkq = m[k * dim + q];
          m[k * dim + p] = c * mkp - s * mkq;
          m[k * dim + q] = s * mkp + c * mkq;
        }
        for (int k = 0; k < dim; ++k) {
          const double mpk = m[p * dim + k], mqk = m[q * dim + k];
          m[p * dim + k] = c * mpk - s * mqk;
          m[q * dim + k] = s * mpk + c * mqk;
        }
      }
    }
  }
  std::vector<double> eig(dim);
  for (int i = 0; i < dim; ++i) eig[i] = m[i * dim + i];
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

}  // namespace oracle
