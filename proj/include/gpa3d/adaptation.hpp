#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gpa3d/bev_encoder.hpp"
#include "gpa3d/config.hpp"
#include "gpa3d/checkpoint.hpp"
#include "gpa3d/detector_head.hpp"
#include "gpa3d/eval.hpp"
#include "gpa3d/instance_replacement.hpp"
#include "gpa3d/log.hpp"
#include "gpa3d/noise_suppression.hpp"
#include "gpa3d/prototypes.hpp"
#include "gpa3d/rng.hpp"
#include "gpa3d/scene_io.hpp"

namespace gpa3d {

inline BevGrid grid_for(const TrainConfig& cfg) {
  return BevGrid::make(-cfg.range, cfg.range, -cfg.range, cfg.range, cfg.cell_size);
}

// Cosine annealing from lr0 down to exactly zero at the last step.
inline double cosine_lr(double lr0, long long step, long long total_steps) {
  if (total_steps <= 1) return lr0;
  const double progress =
      static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

struct EpochMetrics {
  int epoch = 0;
  double l_det_s = 0.0;
  double l_det_t = 0.0;
  double att_fg = 0.0;
  double att_bg = 0.0;
  double rep_adjacent = 0.0;
  double rep_other = 0.0;
  double rep_background = 0.0;
  double ap_bev_50 = std::nan("");
  double ap_bev_70 = std::nan("");
  double silhouette = std::nan("");
};

// Mutable training state: detector parameters, prototypes, and the
// pseudo-label store plus replacement database, which are always refreshed
// together from the same checkpoint.
struct AdaptState {
  DetectorModel model;
  PrototypeBank bank;
  PseudoLabelStore store;
  IraDatabase database;
  int epoch = 0;
  long long step = 0;
  std::vector<EpochMetrics> history;
};

struct StepMetrics {
  double l_det_s = std::nan("");
  double l_det_t = 0.0;
  ContrastBreakdown contrast;  // literal sums over the batch rows
  std::size_t contrast_rows = 0;

  // The quantity one step descends on. The contrast term enters the update
  // normalized per extracted row: with plain SGD (no adaptive optimizer) the
  // raw sums would scale the effective step with the batch's cell count.
  double objective(double contrast_weight) const {
    const double det = (std::isnan(l_det_s) ? 0.0 : l_det_s) + l_det_t;
    if (contrast_rows == 0) return det;
    return det + contrast_weight * contrast.total /
                     static_cast<double>(contrast_rows);
  }
};

namespace adapt_detail {

struct ParamGrads {
  EncoderGrads encoder;
  HeadGrads head;
  bool initialized = false;

  void init(int feature_dim) {
    encoder.d_weight = Matrix(feature_dim, kStatDim);
    encoder.d_bias.assign(feature_dim, 0.0);
    head.d_cls_weight.assign(feature_dim, 0.0);
    head.d_cls_bias = 0.0;
    head.d_reg_weight = Matrix(kRegDim, feature_dim);
    head.d_reg_bias.assign(kRegDim, 0.0);
    initialized = true;
  }

  void accumulate(const EncoderGrads& e, const HeadGrads& h) {
    encoder.d_weight.add_scaled(e.d_weight, 1.0);
    add_scaled(encoder.d_bias, e.d_bias, 1.0);
    add_scaled(head.d_cls_weight, h.d_cls_weight, 1.0);
    head.d_cls_bias += h.d_cls_bias;
    head.d_reg_weight.add_scaled(h.d_reg_weight, 1.0);
    add_scaled(head.d_reg_bias, h.d_reg_bias, 1.0);
  }
};

inline void apply_update(DetectorModel& model, const ParamGrads& grads, double lr) {
  model.encoder.weight.add_scaled(grads.encoder.d_weight, -lr);
  add_scaled(model.encoder.bias, grads.encoder.d_bias, -lr);
  add_scaled(model.head.cls_weight, grads.head.d_cls_weight, -lr);
  model.head.cls_bias -= lr * grads.head.d_cls_bias;
  model.head.reg_weight.add_scaled(grads.head.d_reg_weight, -lr);
  add_scaled(model.head.reg_bias, grads.head.d_reg_bias, -lr);
}

// Work item for one scene of a co-training step.
struct SceneSlot {
  const Scene* scene = nullptr;
  bool is_source = true;
  Scene augmented;            // set when IRA rewrote the scene
  bool use_augmented = false;
  std::vector<Box3D> labels;

  BevFeatureMap map;
  FeatureSequences seqs;
  DetectionLoss loss;
  HeadGrads head_grads;
  std::vector<double> d_features;
  bool has_sequences = false;
};

inline const Scene& slot_scene(const SceneSlot& slot) {
  return slot.use_augmented ? slot.augmented : *slot.scene;
}

}  // namespace adapt_detail

struct PretrainResult {
  DetectorModel model;
  std::vector<double> epoch_loss;
};

// Supervised training on the source domain with cosine-annealed SGD.
inline PretrainResult pretrain(const std::vector<Scene>& source,
                               const TrainConfig& cfg) {
  validate_config(cfg);
  if (source.empty()) throw std::invalid_argument("source domain is empty");
  const BevGrid grid = grid_for(cfg);
  PretrainResult result;
  result.model = init_detector(grid, cfg.feature_dim, cfg.seed);

  const int n = static_cast<int>(source.size());
  const int steps_per_epoch = (n + cfg.batch_source - 1) / cfg.batch_source;
  const long long total_steps =
      static_cast<long long>(cfg.pretrain_epochs) * steps_per_epoch;
  long long step = 0;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
    Rng shuffle_rng = make_stream(cfg.seed, stream::kEpochShuffle, epoch);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    int batches = 0;
    for (int begin = 0; begin < n; begin += cfg.batch_source) {
      const int end = std::min(begin + cfg.batch_source, n);
      const int batch_n = end - begin;
      const double inv_batch = 1.0 / batch_n;

      std::vector<double> losses(batch_n, 0.0);
      std::vector<EncoderGrads> enc_grads(batch_n);
      std::vector<HeadGrads> head_grads(batch_n);
      parallel_for_indexed(batch_n, cfg.workers, [&](int i) {
        const Scene& scene = source[order[begin + i]];
        const auto map = encode(grid, rasterize(scene, grid), result.model.encoder);
        const auto out = head_forward(map, result.model.head);
        const auto tg = detection_targets(grid, scene.boxes);
        auto loss = detection_loss_on_outputs(out, tg);
        losses[i] = loss.total;
        for (double& v : loss.d_logits) v *= inv_batch;
        for (double& v : loss.d_reg) v *= inv_batch;
        auto back = head_backward(map, result.model.head, loss.d_logits, loss.d_reg);
        enc_grads[i] = encode_backward(map, back.d_features);
        head_grads[i] = std::move(back.head);
      });

      adapt_detail::ParamGrads grads;
      grads.init(cfg.feature_dim);
      double batch_loss = 0.0;
      for (int i = 0; i < batch_n; ++i) {
        batch_loss += losses[i] * inv_batch;
        grads.accumulate(enc_grads[i], head_grads[i]);
      }
      if (!std::isfinite(batch_loss)) {
        throw std::runtime_error("pretraining diverged (non-finite loss) at epoch " +
                                 std::to_string(epoch + 1));
      }
      adapt_detail::apply_update(result.model, grads,
                                 cosine_lr(cfg.lr_pretrain, step, total_steps));
      ++step;
      epoch_loss += batch_loss;
      ++batches;
    }
    result.epoch_loss.push_back(epoch_loss / batches);
  }
  return result;
}

// Regenerates pseudo-labels and the replacement database from the current
// detector; the pair always describes the same parameters.
inline void refresh_pseudo_labels(AdaptState& state,
                                  const std::vector<Scene>& target_train,
                                  const TrainConfig& cfg) {
  state.store = generate_pseudo_labels(state.model, target_train,
                                       cfg.pseudo_score_threshold, cfg.nms_iou,
                                       cfg.workers);
  state.database = build_database(state.store, target_train, cfg.k_groups,
                                  cfg.database_score_threshold);
  std::size_t labels = 0;
  for (const auto& [id, boxes] : state.store) labels += boxes.size();
  GPA3D_LOG_DEBUG("refreshed pseudo-labels at epoch %d: %zu labels, %zu database entries",
                  state.epoch, labels, state.database.size());
}

// One optimization step of the adaptation objective: detection losses on the
// source batch (ground truth) and target batch (pseudo-labels, optionally
// instance-replaced), the contrast term over sequences from both domains,
// and the suppression mask applied per configured domain.
inline StepMetrics co_train_step(const std::vector<const Scene*>& batch_source,
                                 const std::vector<const Scene*>& batch_target,
                                 AdaptState& state, const TrainConfig& cfg,
                                 double lr, std::uint64_t step_id) {
  using adapt_detail::SceneSlot;
  const int fd = cfg.feature_dim;
  std::vector<SceneSlot> slots;
  for (const Scene* s : batch_source) {
    SceneSlot slot;
    slot.scene = s;
    slot.is_source = true;
    slot.labels = s->boxes;
    slots.push_back(std::move(slot));
  }
  for (const Scene* s : batch_target) {
    SceneSlot slot;
    slot.scene = s;
    slot.is_source = false;
    const auto it = state.store.find(s->id);
    if (it == state.store.end()) {
      throw std::runtime_error("pseudo-labels missing for scene '" + s->id +
                               "'; refresh_pseudo_labels must run first");
    }
    slot.labels = it->second;
    slots.push_back(std::move(slot));
  }

  const bool need_sequences =
      cfg.use_prototype_alignment || cfg.use_nss;
  const double inv_source = batch_source.empty() ? 0.0 : 1.0 / batch_source.size();
  const double inv_target = batch_target.empty() ? 0.0 : 1.0 / batch_target.size();

  parallel_for_indexed(static_cast<int>(slots.size()), cfg.workers, [&](int i) {
    SceneSlot& slot = slots[i];
    // Instance replacement first: it rewrites both points and labels.
    if (!slot.is_source && cfg.use_ira && !state.database.empty()) {
      Scene working = *slot.scene;
      working.boxes = slot.labels;
      Rng ira_rng = make_stream(cfg.seed, stream::kInstanceReplace,
                                step_id * 64 + static_cast<std::uint64_t>(i));
      IraConfig ira_cfg;
      ira_cfg.p_replace = cfg.ira_probability;
      slot.augmented = replace_instances(working, state.database, ira_cfg, ira_rng);
      slot.labels = slot.augmented.boxes;
      slot.use_augmented = true;
    }
    const Scene& scene = adapt_detail::slot_scene(slot);
    slot.map = encode(state.model.grid, rasterize(scene, state.model.grid),
                      state.model.encoder);
    if (need_sequences) {
      Rng bg_rng = make_stream(cfg.seed, stream::kBackgroundSample,
                               step_id * 64 + static_cast<std::uint64_t>(i));
      slot.seqs = extract_sequences(slot.map, slot.labels, cfg.k_groups, bg_rng);
      slot.has_sequences = true;
    }
    const bool nss_here =
        cfg.use_nss && (cfg.nss_domain == NssDomain::kBoth ||
                        (slot.is_source && cfg.nss_domain == NssDomain::kSource) ||
                        (!slot.is_source && cfg.nss_domain == NssDomain::kTarget));
    const auto out = head_forward(slot.map, state.model.head);
    const auto tg = detection_targets(state.model.grid, slot.labels);
    if (nss_here) {
      const NoiseMask mask = build_mask(slot.map, slot.seqs.fg, state.bank,
                                        cfg.nss_alpha, cfg.nss_sim_threshold);
      slot.loss = detection_loss_on_outputs(out, tg, &mask.values);
    } else {
      slot.loss = detection_loss_on_outputs(out, tg);
    }
    const double inv_batch = slot.is_source ? inv_source : inv_target;
    for (double& v : slot.loss.d_logits) v *= inv_batch;
    for (double& v : slot.loss.d_reg) v *= inv_batch;
    auto back = head_backward(slot.map, state.model.head, slot.loss.d_logits,
                              slot.loss.d_reg);
    slot.head_grads = std::move(back.head);
    slot.d_features = std::move(back.d_features);
  });

  StepMetrics metrics;
  if (!batch_source.empty()) metrics.l_det_s = 0.0;
  for (const SceneSlot& slot : slots) {
    if (slot.is_source) {
      metrics.l_det_s += slot.loss.total * inv_source;
    } else {
      metrics.l_det_t += slot.loss.total * inv_target;
    }
  }

  ContrastGrads contrast_grads;
  if (cfg.use_prototype_alignment) {
    // Merge sequences from every scene of both domains.
    FeatureSequences merged;
    merged.k_groups = cfg.k_groups;
    std::vector<std::pair<int, int>> fg_origin, bg_origin;  // (slot, cell)
    for (std::size_t s = 0; s < slots.size(); ++s) {
      for (const SequenceRow& row : slots[s].seqs.fg) {
        merged.fg.push_back(row);
        fg_origin.push_back({static_cast<int>(s), row.cell});
      }
      for (const SequenceRow& row : slots[s].seqs.bg) {
        merged.bg.push_back(row);
        bg_origin.push_back({static_cast<int>(s), row.cell});
      }
    }
    ContrastOptions options;
    options.soft_margin = cfg.use_soft_contrast;
    PrototypeBank bank = state.bank;
    bank.margin = cfg.margin;
    bank.beta_adjacent = cfg.beta_adjacent;
    bank.beta_other = cfg.beta_other;
    bank.beta_background = cfg.beta_background;
    metrics.contrast = contrast_loss(merged, bank, &contrast_grads, options);
    metrics.contrast_rows = merged.fg.size() + merged.bg.size();
    const double beta =
        metrics.contrast_rows == 0
            ? 0.0
            : cfg.contrast_weight / static_cast<double>(metrics.contrast_rows);
    for (std::size_t r = 0; r < merged.fg.size(); ++r) {
      auto& slot = slots[fg_origin[r].first];
      double* dst = &slot.d_features[static_cast<std::size_t>(fg_origin[r].second) * fd];
      for (int i = 0; i < fd; ++i) dst[i] += beta * contrast_grads.d_fg[r][i];
    }
    for (std::size_t r = 0; r < merged.bg.size(); ++r) {
      auto& slot = slots[bg_origin[r].first];
      double* dst = &slot.d_features[static_cast<std::size_t>(bg_origin[r].second) * fd];
      for (int i = 0; i < fd; ++i) dst[i] += beta * contrast_grads.d_bg[r][i];
    }
  }

  std::vector<EncoderGrads> enc_grads(slots.size());
  parallel_for_indexed(static_cast<int>(slots.size()), cfg.workers, [&](int i) {
    enc_grads[i] = encode_backward(slots[i].map, slots[i].d_features);
  });

  adapt_detail::ParamGrads grads;
  grads.init(fd);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    grads.accumulate(enc_grads[i], slots[i].head_grads);
  }

  const double check = metrics.l_det_t + (batch_source.empty() ? 0.0 : metrics.l_det_s) +
                       metrics.contrast.total;
  if (!std::isfinite(check)) {
    throw std::runtime_error("adaptation diverged (non-finite loss) at step " +
                             std::to_string(step_id));
  }

  adapt_detail::apply_update(state.model, grads, lr);
  if (cfg.use_prototype_alignment && lr > 0.0 && cfg.contrast_weight != 0.0 &&
      metrics.contrast_rows > 0) {
    // Prototype gradients are per-prototype sums over their member rows, so
    // they get a per-prototype mean scale rather than the all-rows scale the
    // dense feature map uses.
    const double beta = cfg.contrast_weight * (cfg.k_groups + 1) /
                        static_cast<double>(metrics.contrast_rows);
    for (auto& g : contrast_grads.d_prototypes) {
      for (double& v : g) v *= beta;
    }
    sgd_step(state.bank, contrast_grads.d_prototypes, lr);
  }
  ++state.step;
  return metrics;
}

struct EvalSnapshot {
  double ap_bev_50 = std::nan("");
  double ap_bev_70 = std::nan("");
  double silhouette = std::nan("");
};

// Detection AP on held-out target scenes plus the foreground silhouette of
// their features under the ground-truth grouping.
inline EvalSnapshot evaluate_on_target(const DetectorModel& model,
                                       const std::vector<Scene>& eval_scenes,
                                       const TrainConfig& cfg) {
  EvalSnapshot snap;
  if (eval_scenes.empty()) return snap;
  const int n = static_cast<int>(eval_scenes.size());
  std::vector<std::vector<Box3D>> dets(n), gts(n);
  std::vector<std::vector<std::vector<double>>> fg_features(n);
  std::vector<std::vector<int>> fg_groups(n);
  parallel_for_indexed(n, cfg.workers, [&](int i) {
    const Scene& scene = eval_scenes[i];
    gts[i] = scene.boxes;
    const auto map = encode(model.grid, rasterize(scene, model.grid), model.encoder);
    const auto decoded = decode(head_forward(map, model.head), model.grid,
                                cfg.eval_score_threshold, cfg.nms_iou);
    for (const Detection& d : decoded) {
      Box3D b = d.box;
      b.score = d.score;
      dets[i].push_back(b);
    }
    const auto assignment = project_boxes_to_cells(model.grid, scene.boxes);
    for (int c = 0; c < model.grid.cells(); ++c) {
      const int owner = assignment.box_of_cell[c];
      if (owner < 0) continue;
      fg_features[i].emplace_back(map.cell_features(c),
                                  map.cell_features(c) + map.feature_dim);
      fg_groups[i].push_back(group_index(scene.boxes[owner], cfg.k_groups));
    }
  });
  const auto r50 = ap_r40(dets, gts, 0.5);
  const auto r70 = ap_r40(dets, gts, 0.7);
  if (r50.ap) snap.ap_bev_50 = *r50.ap;
  if (r70.ap) snap.ap_bev_70 = *r70.ap;

  std::vector<std::vector<double>> features;
  std::vector<int> groups;
  for (int i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < fg_features[i].size(); ++j) {
      features.push_back(std::move(fg_features[i][j]));
      groups.push_back(fg_groups[i][j]);
    }
  }
  // Cap the pairwise silhouette cost; the stride keeps the subsample spread
  // across scenes and deterministic.
  constexpr std::size_t kMaxRows = 1200;
  if (features.size() > kMaxRows) {
    const std::size_t stride = (features.size() + kMaxRows - 1) / kMaxRows;
    std::vector<std::vector<double>> f2;
    std::vector<int> g2;
    for (std::size_t i = 0; i < features.size(); i += stride) {
      f2.push_back(std::move(features[i]));
      g2.push_back(groups[i]);
    }
    features = std::move(f2);
    groups = std::move(g2);
  }
  std::set<int> distinct(groups.begin(), groups.end());
  if (features.size() >= 2 && distinct.size() >= 2) {
    snap.silhouette = silhouette(features, groups);
  }
  return snap;
}

inline std::string metrics_to_csv(const std::vector<EpochMetrics>& history) {
  std::string out =
      "epoch,l_det_s,l_det_t,l_att_fg,l_att_bg,l_rep_adj,l_rep_other,l_rep_bg,"
      "ap_bev_50,ap_bev_70,silhouette\n";
  char buf[512];
  for (const EpochMetrics& m : history) {
    std::snprintf(buf, sizeof(buf),
                  "%d,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", m.epoch,
                  m.l_det_s, m.l_det_t, m.att_fg, m.att_bg, m.rep_adjacent,
                  m.rep_other, m.rep_background, m.ap_bev_50, m.ap_bev_70,
                  m.silhouette);
    out += buf;
  }
  return out;
}

namespace adapt_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

inline void persist_pseudo_state(const std::filesystem::path& dir,
                                 const AdaptState& state) {
  std::string labels;
  for (const auto& [id, boxes] : state.store) {
    nlohmann::json j;
    j["id"] = id;
    auto arr = nlohmann::json::array();
    for (const Box3D& b : boxes) {
      arr.push_back({{"cx", b.cx}, {"cy", b.cy}, {"cz", b.cz}, {"h", b.h},
                     {"w", b.w},   {"l", b.l},   {"yaw", norm_pi(b.yaw)},
                     {"score", b.score.value_or(0.0)}});
    }
    j["boxes"] = std::move(arr);
    labels += j.dump();
    labels += '\n';
  }
  write_text(dir / "pseudo_labels.jsonl", labels);

  std::string db;
  for (int g = 1; g <= state.database.k_groups; ++g) {
    for (const IraEntry& entry : state.database.buckets[g - 1]) {
      nlohmann::json j;
      j["group"] = g;
      j["box"] = {{"cx", entry.box.cx}, {"cy", entry.box.cy}, {"cz", entry.box.cz},
                  {"h", entry.box.h},   {"w", entry.box.w},   {"l", entry.box.l},
                  {"yaw", norm_pi(entry.box.yaw)},
                  {"score", entry.box.score.value_or(0.0)}};
      auto pts = nlohmann::json::array();
      for (const Point& p : entry.local_points) {
        pts.push_back({p.x, p.y, p.z, p.intensity});
      }
      j["points"] = std::move(pts);
      j["source_scene"] = entry.source_scene;
      db += j.dump();
      db += '\n';
    }
  }
  write_text(dir / "ira_database.jsonl", db);
}

}  // namespace adapt_detail

struct AdaptationResult {
  AdaptState state;
  std::vector<Scene> target_eval;  // held-out split used for the metrics
};

// The full adaptation procedure: source pretraining (unless a pretrained
// detector is supplied), initial pseudo-labels and database, then co-training
// epochs with refreshes at the configured update epochs. When out_dir is
// nonempty the run directory (config.snapshot, metrics.csv, checkpoints/,
// pseudo-label state) is maintained there.
inline AdaptationResult run_adaptation(const std::vector<Scene>& source,
                                       const std::vector<Scene>& target,
                                       const TrainConfig& cfg,
                                       const std::string& out_dir = "",
                                       const DetectorModel* pretrained = nullptr) {
  validate_config(cfg);
  if (source.empty() || target.empty()) {
    throw std::invalid_argument("both domains must be nonempty");
  }
  namespace fs = std::filesystem;
  const bool persist = !out_dir.empty();
  fs::path dir(out_dir);
  if (persist) {
    fs::create_directories(dir / "checkpoints");
    adapt_detail::write_text(dir / "config.snapshot", serialize_config(cfg));
  }

  // Trailing share of the target domain is held out for evaluation only.
  const std::size_t eval_count =
      static_cast<std::size_t>(cfg.eval_fraction * target.size());
  std::vector<Scene> target_train(target.begin(), target.end() - eval_count);
  std::vector<Scene> target_eval(target.end() - eval_count, target.end());
  if (target_train.empty()) throw std::invalid_argument("no target scenes left to train on");

  AdaptState state;
  if (pretrained) {
    if (pretrained->feature_dim() != cfg.feature_dim) {
      throw std::invalid_argument("pretrained model feature_dim does not match config");
    }
    state.model = *pretrained;
    state.model.grid = grid_for(cfg);
  } else {
    state.model = pretrain(source, cfg).model;
  }
  state.bank = init_prototypes(cfg.k_groups, cfg.feature_dim, cfg.seed);
  refresh_pseudo_labels(state, target_train, cfg);

  const int n_s = static_cast<int>(source.size());
  const int n_t = static_cast<int>(target_train.size());
  const int steps_target = (n_t + cfg.batch_target - 1) / cfg.batch_target;
  const int steps_source = (n_s + cfg.batch_source - 1) / cfg.batch_source;
  const int steps_per_epoch =
      cfg.use_source ? std::max(steps_source, steps_target) : steps_target;
  const long long total_steps =
      static_cast<long long>(cfg.adapt_epochs) * steps_per_epoch;

  std::vector<int> order_s(n_s), order_t(n_t);
  for (int i = 0; i < n_s; ++i) order_s[i] = i;
  for (int i = 0; i < n_t; ++i) order_t[i] = i;

  for (int epoch = 1; epoch <= cfg.adapt_epochs; ++epoch) {
    Rng shuffle_s = make_stream(cfg.seed, stream::kEpochShuffle, 1000ULL + epoch);
    Rng shuffle_t = make_stream(cfg.seed, stream::kEpochShuffle, 2000ULL + epoch);
    shuffle_s.shuffle(order_s);
    shuffle_t.shuffle(order_t);

    EpochMetrics epoch_metrics;
    epoch_metrics.epoch = epoch;
    double sum_s = 0.0, sum_t = 0.0;
    int steps_with_source = 0;

    // The suppression mask only means something once the prototypes have
    // attracted their groups; before that it would fire on random cells.
    TrainConfig step_cfg = cfg;
    step_cfg.use_nss = cfg.use_nss && epoch > cfg.nss_warmup_epochs;

    for (int s = 0; s < steps_per_epoch; ++s) {
      std::vector<const Scene*> batch_s, batch_t;
      if (cfg.use_source) {
        for (int i = 0; i < cfg.batch_source; ++i) {
          batch_s.push_back(
              &source[order_s[(s * cfg.batch_source + i) % n_s]]);
        }
      }
      for (int i = 0; i < cfg.batch_target; ++i) {
        batch_t.push_back(
            &target_train[order_t[(s * cfg.batch_target + i) % n_t]]);
      }
      const double lr = cosine_lr(cfg.lr_adapt, state.step, total_steps);
      const StepMetrics sm = co_train_step(
          batch_s, batch_t, state, step_cfg, lr,
          static_cast<std::uint64_t>(epoch) * 100000ULL + static_cast<std::uint64_t>(s));
      if (!batch_s.empty()) {
        sum_s += sm.l_det_s;
        ++steps_with_source;
      }
      sum_t += sm.l_det_t;
      epoch_metrics.att_fg += sm.contrast.att_fg / steps_per_epoch;
      epoch_metrics.att_bg += sm.contrast.att_bg / steps_per_epoch;
      epoch_metrics.rep_adjacent += sm.contrast.rep_adjacent / steps_per_epoch;
      epoch_metrics.rep_other += sm.contrast.rep_other / steps_per_epoch;
      epoch_metrics.rep_background += sm.contrast.rep_background / steps_per_epoch;
    }
    epoch_metrics.l_det_s =
        steps_with_source > 0 ? sum_s / steps_with_source : std::nan("");
    epoch_metrics.l_det_t = sum_t / steps_per_epoch;

    state.epoch = epoch;
    const bool refresh = std::find(cfg.update_epochs.begin(), cfg.update_epochs.end(),
                                   epoch) != cfg.update_epochs.end();
    if (refresh) {
      refresh_pseudo_labels(state, target_train, cfg);
      if (persist) {
        char name[64];
        std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
        save_checkpoint((dir / "checkpoints" / name).string(), state.model,
                        &state.bank);
        adapt_detail::persist_pseudo_state(dir, state);
      }
    }

    const EvalSnapshot snap = evaluate_on_target(state.model, target_eval, cfg);
    epoch_metrics.ap_bev_50 = snap.ap_bev_50;
    epoch_metrics.ap_bev_70 = snap.ap_bev_70;
    epoch_metrics.silhouette = snap.silhouette;
    state.history.push_back(epoch_metrics);
  }

  if (persist) {
    save_checkpoint((dir / "checkpoints" / "final.ckpt").string(), state.model,
                    &state.bank);
    adapt_detail::persist_pseudo_state(dir, state);
    adapt_detail::write_text(dir / "metrics.csv", metrics_to_csv(state.history));
  }
  return {std::move(state), std::move(target_eval)};
}

}  // namespace gpa3d
