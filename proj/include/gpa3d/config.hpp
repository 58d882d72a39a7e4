#pragma once

#include <cctype>
#include <charconv>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace gpa3d {

enum class NssDomain { kTarget, kSource, kBoth };

// Everything a training run depends on. The flat key=value config file
// covers every field; CLI flags override file values.
struct TrainConfig {
  int pretrain_epochs = 30;
  int adapt_epochs = 30;
  int batch_source = 4;
  int batch_target = 4;
  double lr_pretrain = 0.003;
  double lr_adapt = 0.0015;
  double contrast_weight = 1.0;  // weight of the contrast term in the adapt loss
  int k_groups = 8;
  std::vector<int> update_epochs = {5, 10, 15, 20, 25, 30};
  std::uint64_t seed = 1;

  // architecture
  int feature_dim = 16;
  double cell_size = 0.8;
  double range = 8.0;   // grid spans [-range, range] on both axes

  // thresholds
  double pseudo_score_threshold = 0.2;
  double database_score_threshold = 0.5;
  double nms_iou = 0.3;
  double eval_score_threshold = 0.2;
  double eval_fraction = 0.25;  // trailing share of target scenes held out

  // components
  bool use_source = true;  // co-training; false trains on pseudo-labels only
  bool use_prototype_alignment = true;
  bool use_soft_contrast = true;
  bool use_nss = true;
  double nss_alpha = 0.0;
  NssDomain nss_domain = NssDomain::kBoth;
  int nss_warmup_epochs = 2;  // epochs before the mask starts to bite
  double nss_sim_threshold = 0.3;
  bool use_ira = true;
  double ira_probability = 0.25;
  double margin = 0.5;
  double beta_adjacent = 5.0;
  double beta_other = 1.0;
  double beta_background = 5.0;

  int workers = 1;
};

inline std::vector<int> default_update_epochs(int adapt_epochs) {
  std::vector<int> epochs;
  for (int e = 5; e <= adapt_epochs; e += 5) epochs.push_back(e);
  return epochs;
}

inline void validate_config(const TrainConfig& cfg) {
  if (cfg.pretrain_epochs < 1 || cfg.adapt_epochs < 1) {
    throw std::invalid_argument("epoch counts must be >= 1");
  }
  if (cfg.batch_source < 1 || cfg.batch_target < 1) {
    throw std::invalid_argument("batch sizes must be >= 1");
  }
  if (cfg.lr_pretrain < 0.0 || cfg.lr_adapt < 0.0) {
    throw std::invalid_argument("learning rates must be >= 0");
  }
  if (cfg.k_groups < 1) throw std::invalid_argument("k_groups must be >= 1");
  if (cfg.feature_dim < 1) throw std::invalid_argument("feature_dim must be >= 1");
  if (cfg.cell_size <= 0.0 || cfg.range <= 0.0) {
    throw std::invalid_argument("cell_size and range must be positive");
  }
  for (int e : cfg.update_epochs) {
    if (e < 1 || e > cfg.adapt_epochs) {
      throw std::invalid_argument("update_epochs entries must lie in [1, adapt_epochs]");
    }
  }
  if (cfg.nss_alpha < 0.0 || cfg.nss_alpha >= 1.0) {
    throw std::invalid_argument("nss_alpha must lie in [0, 1)");
  }
  if (cfg.nss_warmup_epochs < 0) {
    throw std::invalid_argument("nss_warmup_epochs must be >= 0");
  }
  if (cfg.nss_sim_threshold <= -1.0 || cfg.nss_sim_threshold >= 1.0) {
    throw std::invalid_argument("nss_sim_threshold must lie in (-1, 1)");
  }
  if (cfg.ira_probability < 0.0 || cfg.ira_probability > 1.0) {
    throw std::invalid_argument("ira_probability must lie in [0, 1]");
  }
  if (cfg.eval_fraction < 0.0 || cfg.eval_fraction >= 1.0) {
    throw std::invalid_argument("eval_fraction must lie in [0, 1)");
  }
  if (cfg.workers < 1) throw std::invalid_argument("workers must be >= 1");
}

namespace config_detail {

inline std::string nss_domain_name(NssDomain d) {
  switch (d) {
    case NssDomain::kTarget: return "target";
    case NssDomain::kSource: return "source";
    default: return "both";
  }
}

inline NssDomain parse_nss_domain(const std::string& s) {
  if (s == "target") return NssDomain::kTarget;
  if (s == "source") return NssDomain::kSource;
  if (s == "both") return NssDomain::kBoth;
  throw std::invalid_argument("nss_domain must be target, source or both");
}

inline bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config key '" + key + "' expects true/false");
}

inline double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw std::invalid_argument("config key '" + key + "' expects a number, got '" +
                                s + "'");
  }
}

inline long parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    const long v = std::stol(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (...) {
    throw std::invalid_argument("config key '" + key + "' expects an integer, got '" +
                                s + "'");
  }
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key) {
  std::vector<int> out;
  std::string token;
  std::istringstream in(s);
  while (std::getline(in, token, ',')) {
    if (token.empty()) continue;
    out.push_back(static_cast<int>(parse_int(token, key)));
  }
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

}  // namespace config_detail

// Applies one key = value assignment. Unknown keys fail fast.
inline void apply_config_entry(TrainConfig& cfg, const std::string& key,
                               const std::string& value) {
  using namespace config_detail;
  if (key == "pretrain_epochs") cfg.pretrain_epochs = (int)parse_int(value, key);
  else if (key == "adapt_epochs") cfg.adapt_epochs = (int)parse_int(value, key);
  else if (key == "batch_source") cfg.batch_source = (int)parse_int(value, key);
  else if (key == "batch_target") cfg.batch_target = (int)parse_int(value, key);
  else if (key == "lr_pretrain") cfg.lr_pretrain = parse_double(value, key);
  else if (key == "lr_adapt") cfg.lr_adapt = parse_double(value, key);
  else if (key == "contrast_weight") cfg.contrast_weight = parse_double(value, key);
  else if (key == "k_groups") cfg.k_groups = (int)parse_int(value, key);
  else if (key == "update_epochs") cfg.update_epochs = parse_int_list(value, key);
  else if (key == "seed") cfg.seed = (std::uint64_t)parse_int(value, key);
  else if (key == "feature_dim") cfg.feature_dim = (int)parse_int(value, key);
  else if (key == "cell_size") cfg.cell_size = parse_double(value, key);
  else if (key == "range") cfg.range = parse_double(value, key);
  else if (key == "pseudo_score_threshold") cfg.pseudo_score_threshold = parse_double(value, key);
  else if (key == "database_score_threshold") cfg.database_score_threshold = parse_double(value, key);
  else if (key == "nms_iou") cfg.nms_iou = parse_double(value, key);
  else if (key == "eval_score_threshold") cfg.eval_score_threshold = parse_double(value, key);
  else if (key == "eval_fraction") cfg.eval_fraction = parse_double(value, key);
  else if (key == "use_source") cfg.use_source = parse_bool(value, key);
  else if (key == "use_prototype_alignment") cfg.use_prototype_alignment = parse_bool(value, key);
  else if (key == "use_soft_contrast") cfg.use_soft_contrast = parse_bool(value, key);
  else if (key == "use_nss") cfg.use_nss = parse_bool(value, key);
  else if (key == "nss_alpha") cfg.nss_alpha = parse_double(value, key);
  else if (key == "nss_domain") cfg.nss_domain = parse_nss_domain(value);
  else if (key == "nss_warmup_epochs") cfg.nss_warmup_epochs = (int)parse_int(value, key);
  else if (key == "nss_sim_threshold") cfg.nss_sim_threshold = parse_double(value, key);
  else if (key == "use_ira") cfg.use_ira = parse_bool(value, key);
  else if (key == "ira_probability") cfg.ira_probability = parse_double(value, key);
  else if (key == "margin") cfg.margin = parse_double(value, key);
  else if (key == "beta_adjacent") cfg.beta_adjacent = parse_double(value, key);
  else if (key == "beta_other") cfg.beta_other = parse_double(value, key);
  else if (key == "beta_background") cfg.beta_background = parse_double(value, key);
  else if (key == "workers") cfg.workers = (int)parse_int(value, key);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

// Flat key = value format; '#' starts a comment.
inline TrainConfig parse_config(const std::string& text,
                                const TrainConfig& base = {}) {
  TrainConfig cfg = base;
  bool saw_adapt_epochs = false, saw_update_epochs = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) +
                                  ": expected key = value");
    }
    const std::string key = config_detail::trim(line.substr(0, eq));
    const std::string value = config_detail::trim(line.substr(eq + 1));
    try {
      apply_config_entry(cfg, key, value);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " +
                                  e.what());
    }
    if (key == "adapt_epochs") saw_adapt_epochs = true;
    if (key == "update_epochs") saw_update_epochs = true;
  }
  if (saw_adapt_epochs && !saw_update_epochs) {
    cfg.update_epochs = default_update_epochs(cfg.adapt_epochs);
  }
  validate_config(cfg);
  return cfg;
}

// Every field, in a stable order; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  char buf[128];
  auto put_int = [&](const char* key, long long v) {
    std::snprintf(buf, sizeof(buf), "%s = %lld\n", key, v);
    out += buf;
  };
  auto put_double = [&](const char* key, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
    out += buf;
  };
  auto put_bool = [&](const char* key, bool v) {
    std::snprintf(buf, sizeof(buf), "%s = %s\n", key, v ? "true" : "false");
    out += buf;
  };
  put_int("pretrain_epochs", cfg.pretrain_epochs);
  put_int("adapt_epochs", cfg.adapt_epochs);
  put_int("batch_source", cfg.batch_source);
  put_int("batch_target", cfg.batch_target);
  put_double("lr_pretrain", cfg.lr_pretrain);
  put_double("lr_adapt", cfg.lr_adapt);
  put_double("contrast_weight", cfg.contrast_weight);
  put_int("k_groups", cfg.k_groups);
  out += "update_epochs = ";
  for (std::size_t i = 0; i < cfg.update_epochs.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(cfg.update_epochs[i]);
  }
  out += "\n";
  put_int("seed", static_cast<long long>(cfg.seed));
  put_int("feature_dim", cfg.feature_dim);
  put_double("cell_size", cfg.cell_size);
  put_double("range", cfg.range);
  put_double("pseudo_score_threshold", cfg.pseudo_score_threshold);
  put_double("database_score_threshold", cfg.database_score_threshold);
  put_double("nms_iou", cfg.nms_iou);
  put_double("eval_score_threshold", cfg.eval_score_threshold);
  put_double("eval_fraction", cfg.eval_fraction);
  put_bool("use_source", cfg.use_source);
  put_bool("use_prototype_alignment", cfg.use_prototype_alignment);
  put_bool("use_soft_contrast", cfg.use_soft_contrast);
  put_bool("use_nss", cfg.use_nss);
  put_double("nss_alpha", cfg.nss_alpha);
  out += "nss_domain = " + config_detail::nss_domain_name(cfg.nss_domain) + "\n";
  put_int("nss_warmup_epochs", cfg.nss_warmup_epochs);
  put_double("nss_sim_threshold", cfg.nss_sim_threshold);
  put_bool("use_ira", cfg.use_ira);
  put_double("ira_probability", cfg.ira_probability);
  put_double("margin", cfg.margin);
  put_double("beta_adjacent", cfg.beta_adjacent);
  put_double("beta_other", cfg.beta_other);
  put_double("beta_background", cfg.beta_background);
  put_int("workers", cfg.workers);
  return out;
}

}  // namespace gpa3d
