#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "gpa3d/bev_encoder.hpp"
#include "gpa3d/geometry.hpp"
#include "gpa3d/rng.hpp"

namespace gpa3d {

// Learnable prototype bank: one vector per geometric group plus a background
// vector at index k_groups (0-based storage for groups 1..K+1).
struct PrototypeBank {
  int k_groups = 0;
  int feature_dim = 0;
  std::vector<std::vector<double>> vectors;  // k_groups + 1 entries
  double margin = 0.5;
  double beta_adjacent = 5.0;
  double beta_other = 1.0;
  double beta_background = 5.0;

  const std::vector<double>& group_vector(int group) const {
    return vectors[static_cast<std::size_t>(group - 1)];
  }
  const std::vector<double>& background_vector() const { return vectors.back(); }
};

namespace proto_detail {

constexpr double kNormFloor = 1e-12;

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

// Cosine similarity with norms clamped below; never throws. Used inside the
// loss and the noise mask where dead cells must not produce NaNs.
inline double sim_clamped(const std::vector<double>& a, const std::vector<double>& b) {
  const double na = std::max(norm(a), kNormFloor);
  const double nb = std::max(norm(b), kNormFloor);
  return dot(a, b) / (na * nb);
}

// Deterministic replacement for a collapsed prototype.
inline std::vector<double> jitter_vector(int which, int feature_dim) {
  Rng rng(mix_stream(0x6a177e5, stream::kPrototypeInit, which));
  std::vector<double> v(feature_dim);
  for (double& x : v) x = 1e-4 * rng.normal();
  return v;
}

}  // namespace proto_detail

// Cosine similarity of two non-degenerate vectors.
inline double cosine_sim(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("dimension mismatch");
  const double na = proto_detail::norm(a);
  const double nb = proto_detail::norm(b);
  if (na < proto_detail::kNormFloor || nb < proto_detail::kNormFloor) {
    throw std::domain_error("degenerate vector");
  }
  return proto_detail::dot(a, b) / (na * nb);
}

inline PrototypeBank init_prototypes(int k_groups, int feature_dim,
                                     std::uint64_t seed) {
  if (k_groups < 1 || feature_dim < 1) {
    throw std::invalid_argument("k_groups and feature_dim must be >= 1");
  }
  Rng rng = make_stream(seed, stream::kPrototypeInit);
  PrototypeBank bank;
  bank.k_groups = k_groups;
  bank.feature_dim = feature_dim;
  const double sd = std::sqrt(1.0 / feature_dim);
  bank.vectors.assign(k_groups + 1, std::vector<double>(feature_dim, 0.0));
  for (int k = 0; k <= k_groups; ++k) {
    for (double& v : bank.vectors[k]) v = rng.normal(0.0, sd);
    if (proto_detail::norm(bank.vectors[k]) < 1e-8) {
      bank.vectors[k] = proto_detail::jitter_vector(k, feature_dim);
    }
  }
  return bank;
}

// Per-term values of the soft contrast loss. `total` recombines the terms
// with the bank's balance coefficients.
struct ContrastBreakdown {
  double att_fg = 0.0;
  double att_bg = 0.0;
  double rep_adjacent = 0.0;
  double rep_other = 0.0;
  double rep_background = 0.0;
  double total = 0.0;
};

struct ContrastGrads {
  std::vector<std::vector<double>> d_fg;          // per fg row
  std::vector<std::vector<double>> d_bg;          // per bg row
  std::vector<std::vector<double>> d_prototypes;  // k_groups + 1 entries
};

struct ContrastOptions {
  // When false the adjacency relaxation is dropped: every non-own foreground
  // prototype is repelled with no margin (the plain alignment variant).
  bool soft_margin = true;
};

namespace proto_detail {

// Accumulates coeff * d sim(a, b) into both sides.
inline void add_sim_grad(const std::vector<double>& a, const std::vector<double>& b,
                         double sim, double coeff, std::vector<double>& d_a,
                         std::vector<double>& d_b) {
  const double na = std::max(norm(a), kNormFloor);
  const double nb = std::max(norm(b), kNormFloor);
  const double inv = 1.0 / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) {
    d_a[i] += coeff * (b[i] * inv - sim * a[i] / (na * na));
    d_b[i] += coeff * (a[i] * inv - sim * b[i] / (nb * nb));
  }
}

}  // namespace proto_detail

// The five-term attract/repel objective over feature-prototype cosine
// similarities, with exact gradients for every feature row and prototype.
// Foreground rows attract their own prototype, are repelled from adjacent
// prototypes above the margin and from all remaining foreground prototypes
// above zero; background rows attract the background prototype and are
// repelled from every foreground prototype.
inline ContrastBreakdown contrast_loss(const FeatureSequences& seqs,
                                       const PrototypeBank& bank,
                                       ContrastGrads* grads = nullptr,
                                       const ContrastOptions& options = {}) {
  const int k_groups = bank.k_groups;
  if (grads) {
    grads->d_fg.assign(seqs.fg.size(), std::vector<double>(bank.feature_dim, 0.0));
    grads->d_bg.assign(seqs.bg.size(), std::vector<double>(bank.feature_dim, 0.0));
    grads->d_prototypes.assign(k_groups + 1,
                               std::vector<double>(bank.feature_dim, 0.0));
  }
  ContrastBreakdown out;
  std::vector<double> scratch;

  for (std::size_t r = 0; r < seqs.fg.size(); ++r) {
    const SequenceRow& row = seqs.fg[r];
    if (row.group < 1 || row.group > k_groups) {
      throw std::invalid_argument("foreground group index out of range");
    }
    const auto adjacent =
        options.soft_margin ? adjacent_groups(row.group, k_groups) : std::set<int>{};
    for (int k = 1; k <= k_groups; ++k) {
      const auto& proto = bank.group_vector(k);
      const double sim = proto_detail::sim_clamped(row.feature, proto);
      if (k == row.group) {
        out.att_fg += 1.0 - sim;
        if (grads) {
          proto_detail::add_sim_grad(row.feature, proto, sim, -1.0, grads->d_fg[r],
                                     grads->d_prototypes[k - 1]);
        }
      } else if (adjacent.count(k)) {
        if (sim - bank.margin > 0.0) {
          out.rep_adjacent += sim - bank.margin;
          if (grads) {
            proto_detail::add_sim_grad(row.feature, proto, sim, bank.beta_adjacent,
                                       grads->d_fg[r], grads->d_prototypes[k - 1]);
          }
        }
      } else if (sim > 0.0) {
        out.rep_other += sim;
        if (grads) {
          proto_detail::add_sim_grad(row.feature, proto, sim, bank.beta_other,
                                     grads->d_fg[r], grads->d_prototypes[k - 1]);
        }
      }
    }
  }

  for (std::size_t r = 0; r < seqs.bg.size(); ++r) {
    const SequenceRow& row = seqs.bg[r];
    const auto& bg_proto = bank.background_vector();
    const double sim_bg = proto_detail::sim_clamped(row.feature, bg_proto);
    out.att_bg += 1.0 - sim_bg;
    if (grads) {
      proto_detail::add_sim_grad(row.feature, bg_proto, sim_bg, -1.0, grads->d_bg[r],
                                 grads->d_prototypes[k_groups]);
    }
    for (int k = 1; k <= k_groups; ++k) {
      const auto& proto = bank.group_vector(k);
      const double sim = proto_detail::sim_clamped(row.feature, proto);
      if (sim > 0.0) {
        out.rep_background += sim;
        if (grads) {
          proto_detail::add_sim_grad(row.feature, proto, sim, bank.beta_background,
                                     grads->d_bg[r], grads->d_prototypes[k - 1]);
        }
      }
    }
  }

  out.total = out.att_fg + out.att_bg + bank.beta_adjacent * out.rep_adjacent +
              bank.beta_other * out.rep_other +
              bank.beta_background * out.rep_background;
  return out;
}

// Plain gradient step on the prototype vectors; collapsed vectors are
// re-jittered so cosine similarities stay defined.
inline void sgd_step(PrototypeBank& bank,
                     const std::vector<std::vector<double>>& d_prototypes,
                     double lr) {
  if (lr <= 0.0) throw std::invalid_argument("learning rate must be positive");
  if (d_prototypes.size() != bank.vectors.size()) {
    throw std::invalid_argument("prototype gradient count mismatch");
  }
  for (std::size_t k = 0; k < bank.vectors.size(); ++k) {
    for (int i = 0; i < bank.feature_dim; ++i) {
      bank.vectors[k][i] -= lr * d_prototypes[k][i];
    }
    if (proto_detail::norm(bank.vectors[k]) < 1e-8) {
      bank.vectors[k] =
          proto_detail::jitter_vector(static_cast<int>(k), bank.feature_dim);
    }
  }
}

}  // namespace gpa3d
