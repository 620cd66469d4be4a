#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "slowsem/corpus.hpp"
#include "slowsem/model.hpp"
#include "slowsem/objectives.hpp"
#include "slowsem/sequencer.hpp"

namespace slowsem {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double weight_decay = 1e-6;
  LossConfig loss;
  LossMode loss_mode = LossMode::Both;
  double min_crop_fraction = 0.5;
  std::uint64_t seed = 1;
  std::int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::int64_t max_steps = 0;         // 0: epochs * steps_per_epoch

  void validate() const;
};

enum class LabelExclusion { None, Instance, Category };

const char* to_string(LabelExclusion e);
LabelExclusion parse_label_exclusion(const std::string& text);

struct EvalConfig {
  int max_samples = 1200;
  int n_triplets = 10000;
  // Extra restriction on the same-label partner of context/category triplets.
  LabelExclusion exclusion = LabelExclusion::None;
  std::uint64_t seed = 1;
};

// Everything a run needs, as read from a flat `key = value` file.
struct RunConfig {
  std::string corpus_dir;  // empty: synthesize from `synth`
  SynthSpec synth;
  bool balance = true;
  AssignmentMode assignment = AssignmentMode::Fixed;
  std::uint64_t assign_seed = 0;
  SequenceConfig sequence;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::uint64_t seed_data = 1;
  std::uint64_t seed_model = 1;
  std::uint64_t seed_eval = 1;

  // Propagates the three named seeds into the sub-configs.
  void sync_seeds();
  void validate() const;
};

// Parses `key = value` lines; '#' starts a comment. Throws ParseError naming
// the line for malformed lines and ConfigError for unknown keys or bad values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// Canonical text form: every key, fixed order, doubles with round-trip precision.
std::string format_run_config(const RunConfig& config);
void save_run_config(const std::filesystem::path& path, const RunConfig& config);

}  // namespace slowsem
