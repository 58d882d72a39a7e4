#pragma once

#include <stdexcept>
#include <vector>

#include "gpa3d/bev_encoder.hpp"
#include "gpa3d/prototypes.hpp"

namespace gpa3d {

// Per-cell suppression mask: alpha on foreground cells that resemble the
// background prototype, 1.0 everywhere else (background cells included).
struct NoiseMask {
  int height = 0;
  int width = 0;
  std::vector<double> values;
  double alpha = 0.0;
  double sim_threshold = 0.3;
};

// Foreground cells whose cosine similarity to the background prototype
// exceeds the threshold (strictly) are suppressed. Degenerate feature rows
// count as suspicious and are suppressed too.
inline NoiseMask build_mask(const BevFeatureMap& map,
                            const std::vector<SequenceRow>& fg_rows,
                            const PrototypeBank& bank, double alpha,
                            double sim_threshold = 0.3) {
  if (alpha < 0.0 || alpha >= 1.0) {
    throw std::invalid_argument("alpha must lie in [0, 1)");
  }
  NoiseMask mask;
  mask.height = map.grid.height;
  mask.width = map.grid.width;
  mask.alpha = alpha;
  mask.sim_threshold = sim_threshold;
  mask.values.assign(map.grid.cells(), 1.0);
  const auto& bg_proto = bank.background_vector();
  for (const SequenceRow& row : fg_rows) {
    const bool degenerate = proto_detail::norm(row.feature) < proto_detail::kNormFloor;
    if (degenerate || proto_detail::sim_clamped(row.feature, bg_proto) > sim_threshold) {
      mask.values[row.cell] = alpha;
    }
  }
  return mask;
}

// Elementwise product before reduction; loss gradients scale the same way.
inline double apply_mask(const std::vector<double>& cell_losses,
                         const NoiseMask& mask) {
  if (cell_losses.size() != mask.values.size()) {
    throw std::invalid_argument("mask shape mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < cell_losses.size(); ++i) {
    total += cell_losses[i] * mask.values[i];
  }
  return total;
}

}  // namespace gpa3d
