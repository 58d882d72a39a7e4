// Acceptance suite: one test per criterion, each printing a single
// [ACCEPTANCE NN] pass/fail line with the measured quantities.

#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <cstdio>

#include "gpa3d/adaptation.hpp"
#include "gpa3d/instance_replacement.hpp"
#include "gpa3d/manifest.hpp"
#include "gpa3d/noise_suppression.hpp"
#include "gpa3d/synth.hpp"
#include "oracles.hpp"

using namespace gpa3d;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(int criterion, bool pass, const std::string& detail) {
  std::printf("[ACCEPTANCE %02d] %s — %s\n", criterion, pass ? "pass" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
}

// Desk-scale calibration of the training loop: plain SGD needs larger rates
// than the reference ADAM settings, and the suppression threshold moves with
// the 16-dim feature geometry. Domain sizes, epochs, seeds, K and the score
// thresholds are as the criteria state them.
TrainConfig trend_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.pretrain_epochs = 30;
  cfg.adapt_epochs = 30;
  cfg.lr_pretrain = 0.45;
  cfg.lr_adapt = 0.12;
  cfg.update_epochs = {3, 6, 9, 12, 15, 18, 21, 24, 27, 30};
  cfg.contrast_weight = 0.2;
  cfg.nss_sim_threshold = 0.94;
  cfg.nms_iou = 0.5;
  cfg.workers = 1;
  return cfg;
}

struct TrendDomains {
  std::vector<Scene> source;
  std::vector<Scene> target;
};

TrendDomains size_shift_domains(std::uint64_t seed) {
  DomainSpec src = preset("waymo_like");
  src.n_scenes = 200;
  src.seed = seed * 10 + 1;
  DomainSpec tgt = preset("kitti_like");
  tgt.n_scenes = 200;
  tgt.seed = seed * 10 + 2;
  return {generate_domain(src), generate_domain(tgt)};
}

TrainConfig component_config(const TrainConfig& base, bool use_source, bool proto,
                             bool soft, bool nss, bool ira) {
  TrainConfig cfg = base;
  cfg.use_source = use_source;
  cfg.use_prototype_alignment = proto;
  cfg.use_soft_contrast = soft;
  cfg.use_nss = nss;
  cfg.use_ira = ira;
  return cfg;
}

}  // namespace

TEST(Acceptance, C01_GradientCorrectness) {
  const auto t0 = std::chrono::steady_clock::now();
  int checked = 0;
  bool ok = true;

  // Contrast loss: every term, both feature rows and prototypes, away from
  // hinge kinks.
  for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
    Rng rng(seed);
    PrototypeBank bank;
    FeatureSequences seqs;
    const int k_groups = 4, dim = 6;
    for (int attempt = 0;; ++attempt) {
      ASSERT_LT(attempt, 300);
      bank = init_prototypes(k_groups, dim, rng.next_u64());
      seqs.fg.clear();
      seqs.bg.clear();
      seqs.k_groups = k_groups;
      for (int i = 0; i < 3; ++i) {
        SequenceRow row;
        row.feature.resize(dim);
        for (double& v : row.feature) v = rng.normal();
        row.group = static_cast<int>(rng.uniform_int(1, k_groups));
        seqs.fg.push_back(std::move(row));
      }
      for (int i = 0; i < 2; ++i) {
        SequenceRow row;
        row.feature.resize(dim);
        for (double& v : row.feature) v = rng.normal();
        seqs.bg.push_back(std::move(row));
      }
      bool near_kink = false;
      for (const SequenceRow& row : seqs.fg) {
        const auto adjacent = adjacent_groups(row.group, k_groups);
        for (int k = 1; k <= k_groups; ++k) {
          if (k == row.group) continue;
          const double sim = cosine_sim(row.feature, bank.group_vector(k));
          if (std::abs(adjacent.count(k) ? sim - bank.margin : sim) < 1e-3) {
            near_kink = true;
          }
        }
      }
      for (const SequenceRow& row : seqs.bg) {
        for (int k = 1; k <= k_groups; ++k) {
          if (std::abs(cosine_sim(row.feature, bank.group_vector(k))) < 1e-3) {
            near_kink = true;
          }
        }
      }
      if (!near_kink) break;
    }
    ContrastGrads grads;
    contrast_loss(seqs, bank, &grads);
    Rng pick(seed + 999);
    for (int probe = 0; probe < 3 && ok; ++probe) {
      const std::size_t r =
          static_cast<std::size_t>(pick.uniform_int(0, seqs.fg.size() - 1));
      const std::size_t i = static_cast<std::size_t>(pick.uniform_int(0, 5));
      ok = oracle::fd_match(
          [&](double v) {
            const double saved = seqs.fg[r].feature[i];
            seqs.fg[r].feature[i] = v;
            const double loss = contrast_loss(seqs, bank).total;
            seqs.fg[r].feature[i] = saved;
            return loss;
          },
          seqs.fg[r].feature[i], grads.d_fg[r][i]);
      ++checked;
      const std::size_t k =
          static_cast<std::size_t>(pick.uniform_int(0, bank.vectors.size() - 1));
      ok = ok && oracle::fd_match(
                     [&](double v) {
                       const double saved = bank.vectors[k][i];
                       bank.vectors[k][i] = v;
                       const double loss = contrast_loss(seqs, bank).total;
                       bank.vectors[k][i] = saved;
                       return loss;
                     },
                     bank.vectors[k][i], grads.d_prototypes[k][i]);
      ++checked;
    }
  }

  // Detection loss end to end through head and encoder.
  const BevGrid grid = BevGrid::make(-4.8, 4.8, -4.8, 4.8, 0.8);
  DomainSpec spec = preset("waymo_like");
  spec.x_min = spec.y_min = -4.8;
  spec.x_max = spec.y_max = 4.8;
  spec.objects_min = 1;
  spec.objects_max = 2;
  spec.n_scenes = 1;
  const Scene scene = generate_scene(spec, 0);
  const auto stats = rasterize(scene, grid);
  for (std::uint64_t seed = 0; seed < 100 && ok; ++seed) {
    DetectorModel model;
    model.grid = grid;
    Rng rng(seed + 5000);
    model.encoder = init_encoder(6, rng);
    model.head = init_head(6, rng);
    auto loss_of = [&](const DetectorModel& m) {
      const auto map = encode(grid, stats, m.encoder);
      const auto out = head_forward(map, m.head);
      const auto tg = detection_targets(grid, scene.boxes);
      return detection_loss_on_outputs(out, tg).total;
    };
    const auto map = encode(grid, stats, model.encoder);
    const auto out = head_forward(map, model.head);
    const auto tg = detection_targets(grid, scene.boxes);
    const auto loss = detection_loss_on_outputs(out, tg);
    const auto back = head_backward(map, model.head, loss.d_logits, loss.d_reg);
    const auto enc = encode_backward(map, back.d_features);
    Rng pick(seed + 7000);
    for (int probe = 0; probe < 4 && ok; ++probe) {
      const int r = static_cast<int>(pick.uniform_int(0, 5));
      const int c = static_cast<int>(pick.uniform_int(0, kStatDim - 1));
      switch (pick.uniform_int(0, 3)) {
        case 0:
          ok = oracle::fd_match(
              [&](double v) {
                DetectorModel m = model;
                m.encoder.weight.at(r, c) = v;
                return loss_of(m);
              },
              model.encoder.weight.at(r, c), enc.d_weight.at(r, c));
          break;
        case 1:
          ok = oracle::fd_match(
              [&](double v) {
                DetectorModel m = model;
                m.head.cls_weight[r] = v;
                return loss_of(m);
              },
              model.head.cls_weight[r], back.head.d_cls_weight[r]);
          break;
        case 2: {
          const int k = static_cast<int>(pick.uniform_int(0, kRegDim - 1));
          ok = oracle::fd_match(
              [&](double v) {
                DetectorModel m = model;
                m.head.reg_weight.at(k, r) = v;
                return loss_of(m);
              },
              model.head.reg_weight.at(k, r), back.head.d_reg_weight.at(k, r));
          break;
        }
        default:
          ok = oracle::fd_match(
              [&](double v) {
                DetectorModel m = model;
                m.encoder.bias[r] = v;
                return loss_of(m);
              },
              model.encoder.bias[r], enc.d_bias[r]);
      }
      ++checked;
    }
  }

  const double elapsed = seconds_since(t0);
  const bool in_budget = elapsed < 60.0;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%d gradient probes across 200 seeded instances, %.1f s (budget 60 s)",
                checked, elapsed);
  report(1, ok && in_budget, buf);
  EXPECT_TRUE(ok);
  EXPECT_TRUE(in_budget);
  EXPECT_GE(checked, 1000);
}

TEST(Acceptance, C02_GroupingInvariance) {
  Rng rng(2026);
  bool ok = true;
  double worst = 0.0;
  for (int b = 0; b < 1000 && ok; ++b) {
    Box3D box;
    box.cx = rng.uniform(-30, 30);
    box.cy = rng.uniform(-30, 30);
    if (std::hypot(box.cx, box.cy) < 0.5) continue;
    box.cz = 0;
    box.h = box.w = box.l = 2.0;
    box.yaw = rng.uniform(-10, 10);
    const double base = offset_angle(box);
    const int base_group = group_index(box, 8);
    for (int r = 0; r < 16; ++r) {
      const double phi = rng.uniform(0.0, kTwoPi);
      Box3D rotated = box;
      rotated.cx = std::cos(phi) * box.cx - std::sin(phi) * box.cy;
      rotated.cy = std::sin(phi) * box.cx + std::cos(phi) * box.cy;
      rotated.yaw = box.yaw + phi;
      const double err = std::abs(norm_pi(offset_angle(rotated) - base));
      worst = std::max(worst, err);
      if (err > 1e-9 || group_index(rotated, 8) != base_group) ok = false;
    }
  }
  // Boundary cases of the group formula.
  Box3D at_zero;
  at_zero.cx = 10;
  at_zero.cy = 0;
  at_zero.h = at_zero.w = at_zero.l = 1;
  at_zero.yaw = 0.0;
  Box3D near_full = at_zero;
  near_full.yaw = 1e-9;  // offset just under a full turn
  const bool boundary_ok =
      group_index(at_zero, 8) == 1 && group_index(near_full, 8) == 8;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "16000 rotations, worst offset drift %.2e (tol 1e-9); boundaries -> "
                "groups 1 and K",
                worst);
  report(2, ok && boundary_ok, buf);
  EXPECT_TRUE(ok);
  EXPECT_TRUE(boundary_ok);
}

TEST(Acceptance, C03_RotatedIouOracle) {
  Rng rng(303);
  double worst = 0.0;
  for (int i = 0; i < 500; ++i) {
    Box3D a, b;
    a.cx = rng.uniform(-3, 3);
    a.cy = rng.uniform(-3, 3);
    a.l = rng.uniform(1.0, 6.0);
    a.w = rng.uniform(0.8, 3.0);
    a.h = 1.5;
    a.yaw = rng.uniform(-3.2, 3.2);
    b = a;
    b.cx += rng.uniform(-3, 3);
    b.cy += rng.uniform(-3, 3);
    b.l = rng.uniform(1.0, 6.0);
    b.w = rng.uniform(0.8, 3.0);
    b.yaw = rng.uniform(-3.2, 3.2);
    const double exact = bev_iou(a, b);
    const double sampled = oracle::mc_bev_iou(a, b, 500000, 40000 + i);
    worst = std::max(worst, std::abs(exact - sampled));
  }
  char buf[120];
  std::snprintf(buf, sizeof(buf), "500 pairs vs 500k-sample oracle, worst |delta| %.4f (tol 0.01)",
                worst);
  report(3, worst <= 0.01, buf);
  EXPECT_LE(worst, 0.01);
}

TEST(Acceptance, C04_ApOracleAndClosedGap) {
  Rng rng(404);
  bool ap_ok = true;
  int instances = 0;
  for (int n_gt = 1; n_gt <= 3 && ap_ok; ++n_gt) {
    for (int n_det = 0; n_det <= 5 && ap_ok; ++n_det) {
      for (int rep = 0; rep < 30 && ap_ok; ++rep) {
        std::vector<std::vector<Box3D>> gts(1), dets(1);
        for (int g = 0; g < n_gt; ++g) {
          Box3D b;
          b.cx = rng.uniform(-10, 10);
          b.cy = rng.uniform(-10, 10);
          b.l = 4.0;
          b.w = 2.0;
          b.h = 1.5;
          b.yaw = rng.uniform(-3, 3);
          gts[0].push_back(b);
        }
        for (int d = 0; d < n_det; ++d) {
          Box3D b = gts[0][static_cast<std::size_t>(rng.uniform_int(0, n_gt - 1))];
          if (rng.uniform() < 0.4) {
            b.cx = rng.uniform(-10, 10);
            b.cy = rng.uniform(-10, 10);
          } else {
            b.cx += rng.uniform(-1.5, 1.5);
            b.cy += rng.uniform(-1.5, 1.5);
          }
          b.score = rng.uniform(0.05, 1.0);
          dets[0].push_back(b);
        }
        const auto result = ap_r40(dets, gts, 0.5);
        const double brute = oracle::brute_force_ap_r40(dets, gts, 0.5);
        if (!result.ap || std::abs(*result.ap - brute) > 1e-9) ap_ok = false;
        ++instances;
      }
    }
  }

  // Published adaptation benchmark entries: model AP, source AP, oracle AP,
  // printed closed-gap percent. Both detector columns of both tables.
  struct GapCase {
    double model, source, oracle, printed;
  };
  const GapCase cases[] = {
      {78.96, 67.64, 83.29, 72.33},  {59.20, 27.48, 73.45, 69.00},
      {77.79, 67.64, 83.29, 64.86},  {64.56, 27.48, 73.45, 80.66},
      {82.19, 67.64, 83.29, 92.97},  {61.83, 27.48, 73.45, 74.72},
      {80.78, 67.64, 83.29, 83.96},  {65.64, 27.48, 73.45, 83.01},
      {83.79, 67.64, 83.29, 103.19}, {70.88, 27.48, 73.45, 94.41},
      {27.4, 47.8, 84.8, -55.14},    {6.4, 11.5, 71.6, -8.49},
      {76.1, 47.8, 84.8, 76.49},     {42.9, 11.5, 71.6, 52.25},
      {58.1, 47.8, 84.8, 27.84},     {23.2, 11.5, 71.6, 19.47},
      {77.29, 47.8, 84.8, 79.70},    {50.84, 11.5, 71.6, 65.46},
      {33.23, 32.91, 51.88, 1.69},   {18.57, 17.24, 34.87, 7.54},
      {35.10, 32.91, 51.88, 11.54},  {21.05, 17.24, 34.87, 21.61},
      {35.92, 32.91, 51.88, 15.87},  {20.19, 17.24, 34.87, 16.73},
      {35.73, 32.91, 51.88, 14.87},  {20.90, 17.24, 34.87, 20.76},
      {37.25, 32.91, 51.88, 22.88},  {22.54, 17.24, 34.87, 30.06},
      {28.31, 27.8, 49.0, 2.41},     {12.98, 12.1, 31.3, 4.58},
      {33.1, 27.8, 49.0, 25.00},     {20.7, 12.1, 31.3, 44.79},
      {30.6, 27.8, 49.0, 13.21},     {15.6, 12.1, 31.3, 18.23},
      {35.47, 27.8, 49.0, 36.18},    {21.01, 12.1, 31.3, 46.41},
  };
  double worst_gap = 0.0;
  for (const GapCase& c : cases) {
    worst_gap = std::max(worst_gap,
                         std::abs(closed_gap(c.model, c.source, c.oracle) - c.printed));
  }
  char buf[180];
  std::snprintf(buf, sizeof(buf),
                "%d small instances match brute force to 1e-9; %zu closed-gap entries "
                "worst |delta| %.4f (tol 0.01)",
                instances, std::size(cases), worst_gap);
  report(4, ap_ok && worst_gap <= 0.01, buf);
  EXPECT_TRUE(ap_ok);
  EXPECT_LE(worst_gap, 0.01);
}

TEST(Acceptance, C05_PrototypeConvergence) {
  bool attract_ok = true;
  for (std::uint64_t seed = 0; seed < 10 && attract_ok; ++seed) {
    const int k_groups = 4, dim = 8;
    Rng rng(seed + 600);
    FeatureSequences seqs;
    seqs.k_groups = k_groups;
    for (int g = 1; g <= k_groups; ++g) {
      for (int r = 0; r < 5; ++r) {
        SequenceRow row;
        row.feature.resize(dim);
        for (double& v : row.feature) v = rng.normal();
        row.group = g;
        seqs.fg.push_back(std::move(row));
      }
    }
    PrototypeBank bank = init_prototypes(k_groups, dim, seed);
    bank.beta_adjacent = bank.beta_other = bank.beta_background = 0.0;
    for (int step = 0; step < 500; ++step) {
      ContrastGrads grads;
      contrast_loss(seqs, bank, &grads);
      sgd_step(bank, grads.d_prototypes, 0.05);
    }
    for (int g = 1; g <= k_groups; ++g) {
      std::vector<double> mean_dir(dim, 0.0);
      for (const SequenceRow& row : seqs.fg) {
        if (row.group != g) continue;
        const double n = proto_detail::norm(row.feature);
        for (int i = 0; i < dim; ++i) mean_dir[i] += row.feature[i] / n;
      }
      if (cosine_sim(bank.group_vector(g), mean_dir) < 0.99) attract_ok = false;
    }
  }

  int worst_violations = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 700);
    const int k_groups = 4, dim = 6;
    FeatureSequences seqs;
    seqs.k_groups = k_groups;
    for (int i = 0; i < 6; ++i) {
      SequenceRow row;
      row.feature.resize(dim);
      for (double& v : row.feature) v = rng.normal();
      row.group = static_cast<int>(rng.uniform_int(1, k_groups));
      seqs.fg.push_back(std::move(row));
    }
    for (int i = 0; i < 4; ++i) {
      SequenceRow row;
      row.feature.resize(dim);
      for (double& v : row.feature) v = rng.normal();
      seqs.bg.push_back(std::move(row));
    }
    PrototypeBank bank = init_prototypes(k_groups, dim, seed);
    double prev = contrast_loss(seqs, bank).total;
    int violations = 0;
    for (int step = 0; step < 100; ++step) {
      ContrastGrads grads;
      contrast_loss(seqs, bank, &grads);
      sgd_step(bank, grads.d_prototypes, 1e-3);
      const double cur = contrast_loss(seqs, bank).total;
      if (cur > prev + 1e-12) ++violations;
      prev = cur;
    }
    worst_violations = std::max(worst_violations, violations);
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "attract-only cosine >= 0.99 within 500 steps; descent violations "
                "worst %d/100 (allow 2)",
                worst_violations);
  report(5, attract_ok && worst_violations <= 2, buf);
  EXPECT_TRUE(attract_ok);
  EXPECT_LE(worst_violations, 2);
}

TEST(Acceptance, C06_NssExactness) {
  // Mask values, strict threshold, and exact-zero contributions at alpha 0.
  const int dim = 6;
  BevFeatureMap map;
  map.grid = BevGrid::make(0, 4.0, 0, 4.0, 0.8);
  map.feature_dim = dim;
  map.features.assign(static_cast<std::size_t>(map.grid.cells()) * dim, 0.0);
  map.raw_stats.assign(static_cast<std::size_t>(map.grid.cells()) * kStatDim, 0.0);
  map.occupancy.assign(map.grid.cells(), 0);
  PrototypeBank bank;
  bank.k_groups = 2;
  bank.feature_dim = dim;
  bank.vectors.assign(3, std::vector<double>(dim, 0.0));
  bank.vectors[0][0] = 1.0;
  bank.vectors[1][1] = 1.0;
  bank.vectors[2][2] = 1.0;  // background prototype = e2
  std::vector<SequenceRow> fg;
  auto push_row = [&](int cell, double sim_to_bg) {
    SequenceRow row;
    row.cell = cell;
    row.feature.assign(dim, 0.0);
    row.feature[2] = sim_to_bg;
    row.feature[0] = std::sqrt(std::max(0.0, 1.0 - sim_to_bg * sim_to_bg));
    row.group = 1;
    fg.push_back(row);
  };
  push_row(0, 0.9);   // suppressed
  push_row(1, 0.3);   // exactly at threshold: kept (strict inequality)
  push_row(2, 0.0);   // kept
  const NoiseMask mask = build_mask(map, fg, bank, 0.0);
  bool mask_ok = mask.values[0] == 0.0 && mask.values[1] == 1.0 &&
                 mask.values[2] == 1.0;
  for (double v : mask.values) {
    if (v != 0.0 && v != 1.0) mask_ok = false;
  }

  // alpha = 0 removes masked cells from loss and gradient exactly.
  const Scene scene = [] {
    DomainSpec spec = preset("waymo_like");
    spec.n_scenes = 1;
    spec.seed = 9;
    return generate_scene(spec, 0);
  }();
  const BevGrid grid = BevGrid::make(-8, 8, -8, 8, 0.8);
  const CellTargets tg = detection_targets(grid, scene.boxes);
  Rng rng(60606);
  HeadOutput out;
  out.cells = grid.cells();
  out.logits.resize(out.cells);
  out.reg.resize(static_cast<std::size_t>(out.cells) * kRegDim);
  for (double& v : out.logits) v = rng.normal();
  for (double& v : out.reg) v = rng.normal();
  std::vector<double> mask_values(out.cells, 1.0);
  std::vector<int> masked_cells;
  for (int c = 0; c < out.cells; ++c) {
    if (tg.assignment.box_of_cell[c] >= 0 && rng.uniform() < 0.5) {
      mask_values[c] = 0.0;
      masked_cells.push_back(c);
    }
  }
  const auto masked = detection_loss_on_outputs(out, tg, &mask_values);
  const auto plain = detection_loss_on_outputs(out, tg);
  bool zero_ok = !masked_cells.empty();
  double removed = 0.0;
  for (int c : masked_cells) {
    if (masked.d_logits[c] != 0.0) zero_ok = false;
    for (int k = 0; k < kRegDim; ++k) {
      if (masked.d_reg[static_cast<std::size_t>(c) * kRegDim + k] != 0.0) {
        zero_ok = false;
      }
    }
    removed += plain.d_logits[c];
  }
  // Unmasked cells keep their exact contribution.
  for (int c = 0; c < out.cells; ++c) {
    if (mask_values[c] == 1.0 && masked.d_logits[c] != plain.d_logits[c]) {
      zero_ok = false;
    }
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "mask values in {alpha, 1}; sim = 0.3 kept; alpha = 0 zeroes %zu "
                "masked cells exactly",
                masked_cells.size());
  report(6, mask_ok && zero_ok, buf);
  EXPECT_TRUE(mask_ok);
  EXPECT_TRUE(zero_ok);
}

TEST(Acceptance, C07_IraInvariants) {
  // Donor pool across many scenes, then 1000 single-scene replacements.
  Rng score_rng(707);
  auto scored_scene = [&](std::uint64_t seed, const std::vector<double>& scores) {
    Scene scene;
    scene.id = "ira-" + std::to_string(seed);
    scene.domain = DomainTag::kTarget;
    Rng rng(seed);
    for (double s : scores) {
      Box3D box;
      const double bearing = rng.uniform(0.0, kTwoPi);
      const double radius = rng.uniform(5.0, 7.5);
      box.cx = radius * std::cos(bearing);
      box.cy = radius * std::sin(bearing);
      box.cz = -0.2;
      box.h = 1.5;
      box.w = 1.8 + 0.1 * rng.normal();
      box.l = 4.3 + 0.3 * rng.normal();
      box.yaw = rng.uniform(0.0, kTwoPi);
      box.score = s;
      scene.boxes.push_back(box);
      for (int p = 0; p < 15; ++p) {
        const double lx = rng.uniform(-0.4 * box.l, 0.4 * box.l);
        const double ly = rng.uniform(-0.4 * box.w, 0.4 * box.w);
        const double c = std::cos(box.yaw), sn = std::sin(box.yaw);
        scene.points.push_back({box.cx + c * lx - sn * ly, box.cy + sn * lx + c * ly,
                                box.cz + rng.uniform(-0.5, 0.5), 0.5});
      }
    }
    return scene;
  };
  std::vector<Scene> donors;
  PseudoLabelStore store;
  for (std::uint64_t s = 0; s < 60; ++s) {
    donors.push_back(scored_scene(s, {0.9, 0.8, 0.7, 0.65, 0.6, 0.55}));
    store[donors.back().id] = donors.back().boxes;
  }
  const IraDatabase db = build_database(store, donors, 8);
  bool buckets_ok = true;
  for (int g = 1; g <= 8; ++g) {
    if (db.buckets[g - 1].empty()) buckets_ok = false;
    for (const IraEntry& e : db.buckets[g - 1]) {
      if (group_index(e.box, 8) != g || !(*e.box.score > 0.5)) buckets_ok = false;
    }
  }

  Rng rng(808);
  IraConfig cfg;  // p_replace = 0.25
  int eligible = 0, replaced = 0;
  bool invariants_ok = true;
  for (int s = 0; s < 1000; ++s) {
    const Scene scene = scored_scene(10000 + s, {0.30, 0.35, 0.42, 0.48, 0.25});
    eligible += static_cast<int>(scene.boxes.size());
    const Scene out = replace_instances(scene, db, cfg, rng);
    if (out.boxes.size() != scene.boxes.size()) invariants_ok = false;
    for (std::size_t b = 0; b < out.boxes.size(); ++b) {
      if (group_index(out.boxes[b], 8) != group_index(scene.boxes[b], 8)) {
        invariants_ok = false;
      }
      if (*out.boxes[b].score != *scene.boxes[b].score) ++replaced;
    }
    // High scores are never eligible.
    const Scene high = scored_scene(20000 + s, {0.6, 0.9});
    const Scene high_out = replace_instances(high, db, cfg, rng);
    for (std::size_t b = 0; b < high.boxes.size(); ++b) {
      if (*high_out.boxes[b].score != *high.boxes[b].score) invariants_ok = false;
    }
  }
  const double sigma = std::sqrt(eligible * 0.25 * 0.75);
  const bool binomial_ok = std::abs(replaced - 0.25 * eligible) <= 4.0 * sigma;
  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "1000 scenes: groups and counts preserved; replaced %d of %d "
                "eligible (expect %.0f +/- %.0f at 4 sigma); band respected",
                replaced, eligible, 0.25 * eligible, 4.0 * sigma);
  report(7, buckets_ok && invariants_ok && binomial_ok, buf);
  EXPECT_TRUE(buckets_ok);
  EXPECT_TRUE(invariants_ok);
  EXPECT_TRUE(binomial_ok);
}

TEST(Acceptance, C08_AdaptationTrend) {
  const auto t0 = std::chrono::steady_clock::now();
  const char* labels[6] = {"a", "b", "c", "d", "e", "f"};
  double sums[6] = {0, 0, 0, 0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TrainConfig base = trend_config(seed);
    const TrendDomains domains = size_shift_domains(seed);
    const auto pre = pretrain(domains.source, base);
    const TrainConfig configs[6] = {
        component_config(base, false, false, false, false, false),
        component_config(base, true, true, false, false, false),
        component_config(base, true, true, true, false, false),
        component_config(base, true, true, true, true, false),
        component_config(base, true, true, true, false, true),
        component_config(base, true, true, true, true, true),
    };
    for (int row = 0; row < 6; ++row) {
      const auto result = run_adaptation(domains.source, domains.target,
                                         configs[row], "", &pre.model);
      const double ap = result.state.history.back().ap_bev_50;
      sums[row] += ap;
      std::printf("    seed %llu config (%s): target AP_BEV@0.5 = %.2f\n",
                  static_cast<unsigned long long>(seed), labels[row], ap);
      std::fflush(stdout);
    }
  }
  double mean[6];
  for (int row = 0; row < 6; ++row) mean[row] = sums[row] / 3.0;
  const double elapsed = seconds_since(t0);
  const double gap = mean[5] - mean[0];
  bool all_geq = true;
  for (int row = 1; row < 6; ++row) {
    if (mean[row] < mean[0]) all_geq = false;
  }
  const bool in_budget = elapsed < 1800.0;
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "means a..f = %.2f %.2f %.2f %.2f %.2f %.2f; (f)-(a) = %.2f "
                "(need >= 5); all (b)-(f) >= (a): %s; %.0f s (budget 1800 s)",
                mean[0], mean[1], mean[2], mean[3], mean[4], mean[5], gap,
                all_geq ? "yes" : "no", elapsed);
  report(8, gap >= 5.0 && all_geq && in_budget, buf);
  EXPECT_TRUE(in_budget);
  EXPECT_TRUE(all_geq);
  EXPECT_GE(gap, 5.0);
}

TEST(Acceptance, C09_PrototypeCountTrend) {
  const int k_values[4] = {2, 4, 8, 32};
  double ap_sum[4] = {0, 0, 0, 0};
  double sil_sum[4] = {0, 0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const TrainConfig base = trend_config(seed);
    const TrendDomains domains = size_shift_domains(seed);
    const auto pre = pretrain(domains.source, base);
    for (int i = 0; i < 4; ++i) {
      TrainConfig cfg = base;
      cfg.k_groups = k_values[i];
      const auto result =
          run_adaptation(domains.source, domains.target, cfg, "", &pre.model);
      ap_sum[i] += result.state.history.back().ap_bev_50;
      sil_sum[i] += result.state.history.back().silhouette;
      std::printf("    seed %llu K=%d: AP %.2f silhouette %.4f\n",
                  static_cast<unsigned long long>(seed), k_values[i],
                  result.state.history.back().ap_bev_50,
                  result.state.history.back().silhouette);
      std::fflush(stdout);
    }
  }
  double ap_mean[4], sil_mean[4];
  for (int i = 0; i < 4; ++i) {
    ap_mean[i] = ap_sum[i] / 3.0;
    sil_mean[i] = sil_sum[i] / 3.0;
  }
  const int ap_argmax = static_cast<int>(std::max_element(ap_mean, ap_mean + 4) - ap_mean);
  const int sil_argmax =
      static_cast<int>(std::max_element(sil_mean, sil_mean + 4) - sil_mean);
  const bool ap_trend = (ap_argmax == 1 || ap_argmax == 2) &&
                        ap_mean[3] < ap_mean[ap_argmax];
  const bool sil_trend = (sil_argmax == 1 || sil_argmax == 2) &&
                         sil_mean[3] < sil_mean[sil_argmax];
  char buf[240];
  std::snprintf(buf, sizeof(buf),
                "mean AP K=2,4,8,32: %.2f %.2f %.2f %.2f; mean silhouette: %.4f "
                "%.4f %.4f %.4f (argmax must be K=4 or 8, K=32 strictly lower)",
                ap_mean[0], ap_mean[1], ap_mean[2], ap_mean[3], sil_mean[0],
                sil_mean[1], sil_mean[2], sil_mean[3]);
  report(9, ap_trend && sil_trend, buf);
  EXPECT_TRUE(ap_trend);
  EXPECT_TRUE(sil_trend);
}

TEST(Acceptance, C10_Determinism) {
  namespace fs = std::filesystem;
  TrainConfig cfg = trend_config(5);
  cfg.pretrain_epochs = 3;
  cfg.adapt_epochs = 4;
  cfg.update_epochs = {2, 4};
  cfg.workers = 1;
  DomainSpec src = preset("waymo_like");
  src.n_scenes = 24;
  src.seed = 51;
  DomainSpec tgt = preset("kitti_like");
  tgt.n_scenes = 24;
  tgt.seed = 52;
  const auto source = generate_domain(src);
  const auto target = generate_domain(tgt);
  std::string metrics[2];
  std::string checkpoints[2];
  for (int run = 0; run < 2; ++run) {
    const fs::path dir =
        fs::temp_directory_path() / ("gpa3d_accept_det_" + std::to_string(run));
    fs::remove_all(dir);
    run_adaptation(source, target, cfg, dir.string());
    std::ifstream in(dir / "metrics.csv", std::ios::binary);
    std::stringstream buffer;
    buffer << in.rdbuf();
    metrics[run] = buffer.str();
    checkpoints[run] = file_checksum((dir / "checkpoints" / "final.ckpt").string());
    fs::remove_all(dir);
  }
  const bool identical =
      metrics[0] == metrics[1] && !metrics[0].empty() && checkpoints[0] == checkpoints[1];
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "two full runs, metrics.csv %zu bytes byte-identical: %s; final "
                "checkpoints identical: %s",
                metrics[0].size(), metrics[0] == metrics[1] ? "yes" : "no",
                checkpoints[0] == checkpoints[1] ? "yes" : "no");
  report(10, identical, buf);
  EXPECT_TRUE(identical);
}
