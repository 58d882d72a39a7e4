#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gpa3d/adaptation.hpp"
#include "gpa3d/checkpoint.hpp"
#include "gpa3d/config.hpp"
#include "gpa3d/eval.hpp"
#include "gpa3d/kitti.hpp"
#include "gpa3d/log.hpp"
#include "gpa3d/manifest.hpp"
#include "gpa3d/scene_io.hpp"
#include "gpa3d/synth.hpp"

namespace gpa3d {
namespace cli_detail {

namespace fs = std::filesystem;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
}

// Config resolution: defaults <- config file <- explicit CLI overrides.
struct ConfigArgs {
  std::string cfg_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> contrast_weight;
  std::optional<int> k_groups;
  std::optional<int> workers;
  std::optional<int> adapt_epochs;

  TrainConfig resolve() const {
    TrainConfig cfg;
    if (!cfg_path.empty()) cfg = parse_config(read_file(cfg_path));
    if (seed) cfg.seed = *seed;
    if (contrast_weight) cfg.contrast_weight = *contrast_weight;
    if (k_groups) cfg.k_groups = *k_groups;
    if (workers) cfg.workers = *workers;
    if (adapt_epochs) {
      cfg.adapt_epochs = *adapt_epochs;
      cfg.update_epochs = default_update_epochs(cfg.adapt_epochs);
    }
    validate_config(cfg);
    return cfg;
  }
};

inline void add_config_options(CLI::App* cmd, ConfigArgs& args) {
  cmd->add_option("--cfg", args.cfg_path, "flat key=value config file");
  cmd->add_option("--seed", args.seed, "override the config seed");
  cmd->add_option("--contrast-weight", args.contrast_weight,
                  "weight of the contrast term in the adaptation loss");
  cmd->add_option("--k", args.k_groups, "number of geometric groups");
  cmd->add_option("--workers", args.workers, "scene-level worker threads");
}

inline int run_gen(const std::string& preset_name, const std::string& out_path,
                   std::uint64_t seed, int n_scenes, const std::string& domain_override,
                   int workers) {
  DomainSpec spec = preset(preset_name);
  spec.seed = seed;
  spec.n_scenes = n_scenes;
  if (domain_override == "source") spec.domain = DomainTag::kSource;
  else if (domain_override == "target") spec.domain = DomainTag::kTarget;
  else if (!domain_override.empty()) {
    throw std::invalid_argument("--domain must be source or target");
  }
  const auto scenes = generate_domain(spec, workers);
  save_scenes(out_path, scenes);
  GPA3D_LOG_INFO("wrote %d scenes to %s", spec.n_scenes, out_path.c_str());
  return 0;
}

inline int run_ingest(const std::string& labels_dir, int k_groups,
                      const std::string& out_path) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(labels_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".txt") {
      files.push_back(entry.path());
    }
  }
  if (files.empty()) {
    throw std::invalid_argument("no .txt label files in '" + labels_dir + "'");
  }
  std::sort(files.begin(), files.end());
  std::vector<Box3D> boxes;
  std::size_t dont_care = 0;
  for (const auto& file : files) {
    std::vector<KittiLabelLine> labels;
    try {
      labels = parse_labels(read_file(file.string()));
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(file.string() + ": " + e.what());
    }
    for (const KittiLabelLine& label : labels) {
      if (label.dont_care()) {
        ++dont_care;
        continue;
      }
      boxes.push_back(to_box3d(label));
    }
  }
  const auto histogram = group_histogram(boxes, k_groups);
  std::string csv = "group,count\n";
  for (int g = 1; g <= k_groups; ++g) {
    csv += std::to_string(g) + "," + std::to_string(histogram[g - 1]) + "\n";
  }
  write_file(out_path, csv);
  GPA3D_LOG_INFO("ingested %zu boxes from %zu files (%zu DontCare skipped)",
                 boxes.size(), files.size(), dont_care);
  return 0;
}

inline int run_pretrain(const std::string& source_path, const ConfigArgs& cfg_args,
                        const std::string& out_dir) {
  const TrainConfig cfg = cfg_args.resolve();
  RunManifest manifest;
  manifest.config_snapshot = serialize_config(cfg);
  manifest.seed = cfg.seed;
  manifest.started_at = iso8601_utc_now();
  manifest.add_input(source_path);
  if (!cfg_args.cfg_path.empty()) manifest.add_input(cfg_args.cfg_path);

  const auto source = load_scenes(source_path);
  const auto result = pretrain(source, cfg);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  save_checkpoint((dir / "pretrain.ckpt").string(), result.model);
  std::string loss_csv = "epoch,l_det_s\n";
  char buf[64];
  for (std::size_t e = 0; e < result.epoch_loss.size(); ++e) {
    std::snprintf(buf, sizeof(buf), "%zu,%.9g\n", e + 1, result.epoch_loss[e]);
    loss_csv += buf;
  }
  write_file(dir / "pretrain_metrics.csv", loss_csv);
  write_file(dir / "config.snapshot", serialize_config(cfg));
  manifest.finished_at = iso8601_utc_now();
  manifest.add_output((dir / "pretrain.ckpt").string());
  manifest.add_output((dir / "pretrain_metrics.csv").string());
  write_manifest(dir / "manifest.json", manifest);
  GPA3D_LOG_INFO("pretrained %d epochs, final loss %.6g", cfg.pretrain_epochs,
                 result.epoch_loss.back());
  return 0;
}

inline void dump_masks(const std::string& dump_dir, const AdaptState& state,
                       const std::vector<Scene>& target_scenes,
                       const TrainConfig& cfg) {
  fs::create_directories(dump_dir);
  for (const Scene& scene : target_scenes) {
    const auto it = state.store.find(scene.id);
    if (it == state.store.end()) continue;
    const auto map = forward_features(state.model, scene);
    Rng rng = make_stream(cfg.seed, stream::kBackgroundSample, 0xD0D0);
    const auto seqs = extract_sequences(map, it->second, cfg.k_groups, rng);
    const NoiseMask mask =
        build_mask(map, seqs.fg, state.bank, cfg.nss_alpha, cfg.nss_sim_threshold);
    std::string pgm = "P2\n" + std::to_string(mask.width) + " " +
                      std::to_string(mask.height) + "\n255\n";
    for (int i = 0; i < mask.height; ++i) {
      for (int j = 0; j < mask.width; ++j) {
        const double v = mask.values[i * mask.width + j];
        pgm += std::to_string(static_cast<int>(std::lround(v * 255.0)));
        pgm += j + 1 == mask.width ? "\n" : " ";
      }
    }
    write_file(fs::path(dump_dir) / ("mask_" + scene.id + ".pgm"), pgm);
  }
}

inline int run_adapt(const std::string& source_path, const std::string& target_path,
                     const ConfigArgs& cfg_args, const std::string& out_dir,
                     const std::string& pretrained_path,
                     const std::string& dump_masks_dir) {
  const TrainConfig cfg = cfg_args.resolve();
  RunManifest manifest;
  manifest.config_snapshot = serialize_config(cfg);
  manifest.seed = cfg.seed;
  manifest.started_at = iso8601_utc_now();
  manifest.add_input(source_path);
  manifest.add_input(target_path);
  if (!cfg_args.cfg_path.empty()) manifest.add_input(cfg_args.cfg_path);

  const auto source = load_scenes(source_path);
  const auto target = load_scenes(target_path);

  std::optional<DetectorModel> pretrained;
  if (!pretrained_path.empty()) {
    auto loaded = load_checkpoint(pretrained_path);
    if (loaded.model.feature_dim() != cfg.feature_dim) {
      throw std::invalid_argument("checkpoint feature_dim does not match config");
    }
    pretrained = std::move(loaded.model);
    manifest.add_input(pretrained_path);
  }

  const auto result = run_adaptation(source, target, cfg, out_dir,
                                     pretrained ? &*pretrained : nullptr);
  if (!dump_masks_dir.empty()) {
    std::vector<Scene> target_train(target.begin(),
                                    target.end() - result.target_eval.size());
    dump_masks(dump_masks_dir, result.state, target_train, cfg);
  }
  manifest.finished_at = iso8601_utc_now();
  const fs::path dir(out_dir);
  manifest.add_output((dir / "metrics.csv").string());
  manifest.add_output((dir / "checkpoints" / "final.ckpt").string());
  manifest.add_output((dir / "pseudo_labels.jsonl").string());
  write_manifest(dir / "manifest.json", manifest);
  const auto& last = result.state.history.back();
  GPA3D_LOG_INFO("adapted %d epochs, final AP_BEV@0.5 %.2f, @0.7 %.2f",
                 cfg.adapt_epochs, last.ap_bev_50, last.ap_bev_70);
  return 0;
}

// Accepts full scene lines or bare {"id", "boxes"} label-store lines (the
// pseudo-label format written by adapt runs).
inline std::map<std::string, std::vector<Box3D>> load_boxes_by_id(
    const std::string& path) {
  std::map<std::string, std::vector<Box3D>> by_id;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      if (j.contains("domain")) {
        const Scene scene = scene_from_json(j);
        by_id[scene.id] = scene.boxes;
      } else {
        std::vector<Box3D> boxes;
        for (const auto& jb : j.at("boxes")) {
          Box3D b;
          b.cx = jb.at("cx").get<double>();
          b.cy = jb.at("cy").get<double>();
          b.cz = jb.at("cz").get<double>();
          b.h = jb.at("h").get<double>();
          b.w = jb.at("w").get<double>();
          b.l = jb.at("l").get<double>();
          b.yaw = jb.at("yaw").get<double>();
          if (jb.contains("score")) b.score = jb.at("score").get<double>();
          boxes.push_back(b);
        }
        by_id[j.at("id").get<std::string>()] = std::move(boxes);
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path + " line " + std::to_string(line_no) + ": " +
                               e.what());
    }
  }
  return by_id;
}

inline int run_eval(const std::string& det_path, const std::string& gt_path,
                    double iou, const std::string& out_path) {
  const auto det_by_id = load_boxes_by_id(det_path);
  const auto gt_scenes = load_scenes(gt_path);
  std::vector<std::vector<Box3D>> dets, gts;
  for (const Scene& gt_scene : gt_scenes) {
    gts.push_back(gt_scene.boxes);
    const auto it = det_by_id.find(gt_scene.id);
    dets.push_back(it == det_by_id.end() ? std::vector<Box3D>{} : it->second);
  }
  const EvalResult result = ap_r40(dets, gts, iou);
  char buf[256];
  std::string csv = "iou,ap,matched,false_positives,missed,gt_count,det_count\n";
  std::snprintf(buf, sizeof(buf), "%.9g,%.9g,%d,%d,%d,%d,%d\n", iou,
                result.ap ? *result.ap : std::nan(""), result.matched,
                result.false_positives, result.missed, result.gt_count,
                result.det_count);
  csv += buf;
  write_file(out_path, csv);
  if (result.ap) {
    GPA3D_LOG_INFO("AP@%.2g = %.4f (%d det / %d gt)", iou, *result.ap,
                   result.det_count, result.gt_count);
  } else {
    GPA3D_LOG_INFO("AP undefined: no ground truth boxes");
  }
  return 0;
}

// The component lattice used by the ablation sweep. The canonical six rows
// when all four components are named; otherwise the baseline plus cumulative
// additions in the order given.
struct AblateRow {
  std::string label;
  TrainConfig cfg;
};

inline std::vector<AblateRow> ablate_rows(const std::vector<std::string>& grid,
                                          const TrainConfig& base) {
  for (const std::string& g : grid) {
    if (g != "proto" && g != "soft" && g != "nss" && g != "ira") {
      throw std::invalid_argument("unknown ablation component '" + g +
                                  "' (valid: proto, soft, nss, ira)");
    }
  }
  auto baseline = base;
  baseline.use_source = false;
  baseline.use_prototype_alignment = false;
  baseline.use_soft_contrast = false;
  baseline.use_nss = false;
  baseline.use_ira = false;

  auto with = [&](bool proto, bool soft, bool nss, bool ira) {
    TrainConfig cfg = base;
    cfg.use_source = true;
    cfg.use_prototype_alignment = proto;
    cfg.use_soft_contrast = soft;
    cfg.use_nss = nss;
    cfg.use_ira = ira;
    return cfg;
  };

  const bool full = grid.size() == 4;
  std::vector<AblateRow> rows;
  rows.push_back({"a_self_training", baseline});
  if (full) {
    rows.push_back({"b_proto", with(true, false, false, false)});
    rows.push_back({"c_proto_soft", with(true, true, false, false)});
    rows.push_back({"d_proto_soft_nss", with(true, true, true, false)});
    rows.push_back({"e_proto_soft_ira", with(true, true, false, true)});
    rows.push_back({"f_full", with(true, true, true, true)});
    return rows;
  }
  bool proto = false, soft = false, nss = false, ira = false;
  std::string label = "";
  for (const std::string& g : grid) {
    if (g == "proto") proto = true;
    if (g == "soft") soft = true;
    if (g == "nss") nss = true;
    if (g == "ira") ira = true;
    label += "_" + g;
    rows.push_back({"cum" + label, with(proto, soft, nss, ira)});
  }
  return rows;
}

inline int run_ablate(const std::string& grid_arg, const ConfigArgs& cfg_args,
                      int budget_epochs, const std::string& source_path,
                      const std::string& target_path, const std::string& out_dir,
                      int n_scenes) {
  TrainConfig base = cfg_args.resolve();
  if (budget_epochs > 0) {
    base.adapt_epochs = budget_epochs;
    base.update_epochs = default_update_epochs(budget_epochs);
  }

  std::vector<std::string> grid;
  std::stringstream ss(grid_arg);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (!token.empty()) grid.push_back(token);
  }
  const auto rows = ablate_rows(grid, base);

  std::vector<Scene> source, target;
  if (!source_path.empty() && !target_path.empty()) {
    source = load_scenes(source_path);
    target = load_scenes(target_path);
  } else {
    DomainSpec src_spec = preset("waymo_like");
    src_spec.seed = base.seed;
    src_spec.n_scenes = n_scenes;
    DomainSpec tgt_spec = preset("kitti_like");
    tgt_spec.seed = base.seed + 1;
    tgt_spec.n_scenes = n_scenes;
    source = generate_domain(src_spec, base.workers);
    target = generate_domain(tgt_spec, base.workers);
    GPA3D_LOG_INFO("generated %d source + %d target scenes (size-shift presets)",
                   n_scenes, n_scenes);
  }

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  // All rows share the source pretraining: the adaptation configs only
  // differ after the pretrained checkpoint.
  const auto pre = pretrain(source, base);
  std::string csv = "config,proto,soft,nss,ira,ap_bev_50,ap_bev_70,silhouette\n";
  for (const AblateRow& row : rows) {
    const auto result = run_adaptation(source, target, row.cfg,
                                       (dir / row.label).string(), &pre.model);
    const auto& last = result.state.history.back();
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%s,%d,%d,%d,%d,%.9g,%.9g,%.9g\n",
                  row.label.c_str(), row.cfg.use_prototype_alignment ? 1 : 0,
                  row.cfg.use_soft_contrast ? 1 : 0, row.cfg.use_nss ? 1 : 0,
                  row.cfg.use_ira ? 1 : 0, last.ap_bev_50, last.ap_bev_70,
                  last.silhouette);
    csv += buf;
    GPA3D_LOG_INFO("ablation %s: AP_BEV@0.5 %.2f", row.label.c_str(), last.ap_bev_50);
  }
  write_file(dir / "ablate.csv", csv);
  return 0;
}

inline int run_export(const std::string& scenes_path, const std::string& ckpt_path,
                      const ConfigArgs& cfg_args, const std::string& out_dir,
                      bool export_prototypes, bool export_projection) {
  TrainConfig cfg = cfg_args.resolve();
  auto loaded = load_checkpoint(ckpt_path);
  if (loaded.model.feature_dim() != cfg.feature_dim) {
    cfg.feature_dim = loaded.model.feature_dim();
  }
  loaded.model.grid = grid_for(cfg);
  if (loaded.bank) cfg.k_groups = loaded.bank->k_groups;
  const auto scenes = load_scenes(scenes_path);

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  std::string features_csv = "scene_id,cell_x,cell_y,fg_flag,group";
  for (int c = 0; c < cfg.feature_dim; ++c) {
    features_csv += ",f_" + std::to_string(c);
  }
  features_csv += "\n";

  std::vector<std::vector<double>> proj_features;
  std::string proj_rows;  // group, domain per row (joined after projection)
  std::vector<std::pair<int, std::string>> proj_meta;

  char buf[64];
  for (const Scene& scene : scenes) {
    const auto map = forward_features(loaded.model, scene);
    const auto assignment = project_boxes_to_cells(loaded.model.grid, scene.boxes);
    for (int c = 0; c < loaded.model.grid.cells(); ++c) {
      const bool fg = assignment.box_of_cell[c] >= 0;
      if (!fg && !map.occupancy[c]) continue;  // export informative cells
      const int group =
          fg ? group_index(scene.boxes[assignment.box_of_cell[c]], cfg.k_groups) : 0;
      features_csv += scene.id + "," + std::to_string(c / map.grid.width) + "," +
                      std::to_string(c % map.grid.width) + "," +
                      std::to_string(fg ? 1 : 0) + "," + std::to_string(group);
      for (int k = 0; k < map.feature_dim; ++k) {
        std::snprintf(buf, sizeof(buf), ",%.9g", map.cell_features(c)[k]);
        features_csv += buf;
      }
      features_csv += "\n";
      if (export_projection) {
        proj_features.emplace_back(map.cell_features(c),
                                   map.cell_features(c) + map.feature_dim);
        proj_meta.push_back(
            {group, scene.domain == DomainTag::kSource ? "source" : "target"});
      }
    }
  }
  write_file(dir / "features.csv", features_csv);

  if (export_projection) {
    if (proj_features.size() < 2) {
      throw std::invalid_argument("projection needs at least 2 exported cells");
    }
    const auto projected = project_2d(proj_features);
    std::string csv = "x,y,group,domain\n";
    for (std::size_t i = 0; i < projected.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.9g,%.9g,", projected[i][0], projected[i][1]);
      csv += buf;
      csv += std::to_string(proj_meta[i].first) + "," + proj_meta[i].second + "\n";
    }
    write_file(dir / "projection.csv", csv);
  }

  if (export_prototypes) {
    if (!loaded.bank) {
      throw std::invalid_argument("checkpoint '" + ckpt_path + "' has no prototypes");
    }
    std::string csv = "group";
    for (int c = 0; c < loaded.bank->feature_dim; ++c) csv += ",c_" + std::to_string(c);
    csv += "\n";
    for (int g = 1; g <= loaded.bank->k_groups + 1; ++g) {
      csv += std::to_string(g);
      for (double v : loaded.bank->vectors[g - 1]) {
        std::snprintf(buf, sizeof(buf), ",%.9g", v);
        csv += buf;
      }
      csv += "\n";
    }
    write_file(dir / "prototypes.csv", csv);
  }
  GPA3D_LOG_INFO("exported features for %zu scenes to %s", scenes.size(),
                 out_dir.c_str());
  return 0;
}

}  // namespace cli_detail

// Subcommand dispatcher. Exit codes: 0 success, 1 user error (bad flags,
// files, or configuration), 2 internal error.
inline int cli_main(int argc, char** argv) {
  using namespace cli_detail;
  CLI::App app{"Desk-scale geometry-aware prototype alignment for LiDAR domain adaptation"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic domain as JSON-lines");
  std::string gen_preset = "waymo_like", gen_out, gen_domain;
  std::uint64_t gen_seed = 1;
  int gen_n = 200, gen_workers = 1;
  gen->add_option("--preset", gen_preset, "waymo_like | kitti_like | nuscenes_like");
  gen->add_option("--out", gen_out, "output .jsonl path")->required();
  gen->add_option("--seed", gen_seed, "generator seed");
  gen->add_option("--n", gen_n, "number of scenes");
  gen->add_option("--domain", gen_domain, "override domain tag (source | target)");
  gen->add_option("--workers", gen_workers, "scene-level worker threads");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "histogram KITTI labels by geometric group");
  std::string ingest_dir, ingest_out;
  int ingest_k = 8;
  ingest->add_option("--labels-dir", ingest_dir, "directory of label .txt files")->required();
  ingest->add_option("--k", ingest_k, "number of groups");
  ingest->add_option("--out", ingest_out, "output histogram csv")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "train the detector on a source domain");
  std::string pre_source, pre_out;
  ConfigArgs pre_cfg;
  pre->add_option("--source", pre_source, "source scenes .jsonl")->required();
  pre->add_option("--out", pre_out, "output run directory")->required();
  add_config_options(pre, pre_cfg);

  // adapt
  auto* adapt = app.add_subcommand("adapt", "run the full adaptation loop");
  std::string adapt_source, adapt_target, adapt_out, adapt_pretrained, adapt_masks;
  ConfigArgs adapt_cfg;
  adapt->add_option("--source", adapt_source, "source scenes .jsonl")->required();
  adapt->add_option("--target", adapt_target, "target scenes .jsonl")->required();
  adapt->add_option("--out", adapt_out, "output run directory")->required();
  adapt->add_option("--pretrained", adapt_pretrained, "reuse a pretrain checkpoint");
  adapt->add_option("--dump-masks", adapt_masks, "write per-scene noise masks as PGM");
  add_config_options(adapt, adapt_cfg);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "average precision at 40 recall positions");
  std::string eval_det, eval_gt, eval_out;
  double eval_iou = 0.5;
  eval_cmd->add_option("--det", eval_det, "detections .jsonl (scored boxes)")->required();
  eval_cmd->add_option("--gt", eval_gt, "ground truth .jsonl")->required();
  eval_cmd->add_option("--iou", eval_iou, "matching IoU threshold");
  eval_cmd->add_option("--out", eval_out, "output csv")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the component ablation lattice");
  std::string ablate_grid = "proto,soft,nss,ira", ablate_source, ablate_target,
              ablate_out = "ablate";
  int ablate_budget = 0, ablate_n = 200;
  ConfigArgs ablate_cfg;
  ablate->add_option("--grid", ablate_grid, "components to sweep (comma separated)");
  ablate->add_option("--budget-epochs", ablate_budget, "adaptation epochs per row");
  ablate->add_option("--source", ablate_source, "source scenes .jsonl (else generated)");
  ablate->add_option("--target", ablate_target, "target scenes .jsonl (else generated)");
  ablate->add_option("--out", ablate_out, "output directory");
  ablate->add_option("--n", ablate_n, "scenes per generated domain");
  add_config_options(ablate, ablate_cfg);

  // export-features
  auto* exp = app.add_subcommand("export-features", "dump BEV features and prototypes");
  std::string exp_scenes, exp_ckpt, exp_out;
  bool exp_protos = false, exp_project = false;
  ConfigArgs exp_cfg;
  exp->add_option("--scenes", exp_scenes, "scenes .jsonl")->required();
  exp->add_option("--ckpt", exp_ckpt, "checkpoint file")->required();
  exp->add_option("--out", exp_out, "output directory")->required();
  exp->add_flag("--prototypes", exp_protos, "also dump the prototype bank");
  exp->add_flag("--project", exp_project, "also dump a 2-D projection of the features");
  add_config_options(exp, exp_cfg);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) {
      return run_gen(gen_preset, gen_out, gen_seed, gen_n, gen_domain, gen_workers);
    }
    if (ingest->parsed()) return run_ingest(ingest_dir, ingest_k, ingest_out);
    if (pre->parsed()) return run_pretrain(pre_source, pre_cfg, pre_out);
    if (adapt->parsed()) {
      return run_adapt(adapt_source, adapt_target, adapt_cfg, adapt_out,
                       adapt_pretrained, adapt_masks);
    }
    if (eval_cmd->parsed()) return run_eval(eval_det, eval_gt, eval_iou, eval_out);
    if (ablate->parsed()) {
      return run_ablate(ablate_grid, ablate_cfg, ablate_budget, ablate_source,
                        ablate_target, ablate_out, ablate_n);
    }
    if (exp->parsed()) {
      return run_export(exp_scenes, exp_ckpt, exp_cfg, exp_out, exp_protos,
                        exp_project);
    }
    return 1;
  } catch (const std::invalid_argument& e) {
    GPA3D_LOG_ERROR("%s", e.what());
    return 1;
  } catch (const std::runtime_error& e) {
    GPA3D_LOG_ERROR("%s", e.what());
    return 1;
  } catch (const std::exception& e) {
    GPA3D_LOG_ERROR("internal error: %s", e.what());
    return 2;
  }
}

}  // namespace gpa3d
