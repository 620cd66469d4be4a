#include "slowsem/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "slowsem/errors.hpp"

namespace slowsem {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument(v);
    auto d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

struct Entry {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define INT_ENTRY(KEY, FIELD)                                                                \
  Entry {                                                                                    \
    KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                         \
        [](RunConfig& c, const std::string& v) { c.FIELD = static_cast<decltype(c.FIELD)>(to_int(KEY, v)); } \
  }
#define U64_ENTRY(KEY, FIELD)                                                        \
  Entry {                                                                            \
    KEY, [](const RunConfig& c) { return std::to_string(c.FIELD); },                 \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_u64(KEY, v); }         \
  }
#define DOUBLE_ENTRY(KEY, FIELD)                                                     \
  Entry {                                                                            \
    KEY, [](const RunConfig& c) { return fmt_double(c.FIELD); },                     \
        [](RunConfig& c, const std::string& v) { c.FIELD = to_double(KEY, v); }      \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      {"corpus_dir", [](const RunConfig& c) { return c.corpus_dir; },
       [](RunConfig& c, const std::string& v) { c.corpus_dir = v; }},
      INT_ENTRY("synth.n_contexts", synth.n_contexts),
      INT_ENTRY("synth.categories_per_context", synth.categories_per_context),
      INT_ENTRY("synth.instances_per_category", synth.instances_per_category),
      INT_ENTRY("synth.test_instances_per_category", synth.test_instances_per_category),
      INT_ENTRY("synth.frames_per_clip", synth.frames_per_clip),
      INT_ENTRY("synth.image_size", synth.image_size),
      {"synth.background", [](const RunConfig& c) { return std::string(to_string(c.synth.background_mode)); },
       [](RunConfig& c, const std::string& v) { c.synth.background_mode = parse_background_mode(v); }},
      INT_ENTRY("synth.background_contrast", synth.background_contrast),
      INT_ENTRY("synth.rotation_steps", synth.pose_jitter.rotation_steps),
      INT_ENTRY("synth.scale_percent", synth.pose_jitter.scale_percent),
      INT_ENTRY("synth.translation_px", synth.pose_jitter.translation_px),
      INT_ENTRY("synth.light_jitter", synth.light_jitter),
      INT_ENTRY("synth.category_hue_spread", synth.category_hue_spread),
      INT_ENTRY("synth.instance_color_variation", synth.instance_color_variation),
      INT_ENTRY("synth.instance_size_percent", synth.instance_size_percent),
      INT_ENTRY("synth.instance_rotation_steps", synth.instance_rotation_steps),
      {"balance", [](const RunConfig& c) { return std::string(c.balance ? "true" : "false"); },
       [](RunConfig& c, const std::string& v) { c.balance = to_bool("balance", v); }},
      {"assignment", [](const RunConfig& c) { return std::string(to_string(c.assignment)); },
       [](RunConfig& c, const std::string& v) { c.assignment = parse_assignment_mode(v); }},
      U64_ENTRY("assign_seed", assign_seed),
      DOUBLE_ENTRY("sequence.p_c", sequence.p_c),
      DOUBLE_ENTRY("sequence.gamma", sequence.gamma),
      DOUBLE_ENTRY("sequence.stop_fraction", sequence.stop_fraction),
      {"model.encoder", [](const RunConfig& c) { return std::string(to_string(c.model.encoder_kind)); },
       [](RunConfig& c, const std::string& v) { c.model.encoder_kind = parse_encoder_kind(v); }},
      INT_ENTRY("model.image_size", model.image_size),
      INT_ENTRY("model.representation_dim", model.representation_dim),
      INT_ENTRY("model.head_hidden_dim", model.head_hidden_dim),
      INT_ENTRY("model.embed_dim", model.embed_dim),
      INT_ENTRY("model.conv_blocks", model.conv_blocks),
      {"loss.mode", [](const RunConfig& c) { return std::string(to_string(c.train.loss_mode)); },
       [](RunConfig& c, const std::string& v) { c.train.loss_mode = parse_loss_mode(v); }},
      DOUBLE_ENTRY("loss.tau_ssltt", train.loss.tau_ssltt),
      DOUBLE_ENTRY("loss.tau_vla", train.loss.tau_vla),
      INT_ENTRY("loss.delta_t", train.loss.delta_t),
      DOUBLE_ENTRY("loss.min_crop_fraction", train.min_crop_fraction),
      INT_ENTRY("train.epochs", train.epochs),
      INT_ENTRY("train.batch_size", train.batch_size),
      DOUBLE_ENTRY("train.learning_rate", train.learning_rate),
      DOUBLE_ENTRY("train.weight_decay", train.weight_decay),
      INT_ENTRY("train.checkpoint_every", train.checkpoint_every),
      INT_ENTRY("train.max_steps", train.max_steps),
      INT_ENTRY("eval.max_samples", eval.max_samples),
      INT_ENTRY("eval.n_triplets", eval.n_triplets),
      {"eval.same_label_exclusion", [](const RunConfig& c) { return std::string(to_string(c.eval.exclusion)); },
       [](RunConfig& c, const std::string& v) { c.eval.exclusion = parse_label_exclusion(v); }},
      U64_ENTRY("seed.data", seed_data),
      U64_ENTRY("seed.model", seed_model),
      U64_ENTRY("seed.eval", seed_eval),
  };
  return table;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
  if (!(min_crop_fraction > 0.0 && min_crop_fraction <= 1.0))
    throw ConfigError("min_crop_fraction must be in (0, 1]");
  if (checkpoint_every < 0 || max_steps < 0) throw ConfigError("step counts must be >= 0");
  loss.validate();
}

const char* to_string(LabelExclusion e) {
  switch (e) {
    case LabelExclusion::None: return "none";
    case LabelExclusion::Instance: return "instance";
    case LabelExclusion::Category: return "category";
  }
  return "?";
}

LabelExclusion parse_label_exclusion(const std::string& text) {
  if (text == "none") return LabelExclusion::None;
  if (text == "instance") return LabelExclusion::Instance;
  if (text == "category") return LabelExclusion::Category;
  throw ConfigError("unknown label exclusion '" + text + "'");
}

void RunConfig::sync_seeds() {
  sequence.seed = seed_data;
  train.seed = seed_model;
  eval.seed = seed_eval;
}

void RunConfig::validate() const {
  if (corpus_dir.empty()) synth.validate();
  sequence.validate();
  train.validate();
  if (model.image_size < 1 || model.representation_dim < 1 || model.head_hidden_dim < 1 || model.embed_dim < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (eval.max_samples < 3 || eval.n_triplets < 1)
    throw ConfigError("eval.max_samples must be >= 3 and eval.n_triplets >= 1");
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    bool found = false;
    for (const auto& e : entries())
      if (e.key == key) {
        e.set(cfg, value);
        found = true;
      }
    if (!found) throw ConfigError("unknown config key '" + key + "' (line " + std::to_string(line_no) + ")");
  }
  cfg.sync_seeds();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += e.key + " = " + e.get(config) + "\n";
  return out;
}

void save_run_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write config " + path.string());
  out << format_run_config(config);
}

}  // namespace slowsem
