#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "slowsem/checkpoint.hpp"
#include "slowsem/config.hpp"
#include "slowsem/corpus.hpp"
#include "slowsem/evaluator.hpp"
#include "slowsem/sequencer.hpp"
#include "slowsem/trainer.hpp"

namespace slowsem {

struct PreparedCorpus {
  CorpusManifest manifest;
  ContextAssignment assignment;
};

// Loads corpus_dir (manifest.csv + contexts.csv) or synthesizes the configured
// corpus, balances it under the base mapping, then applies the configured
// assignment mode.
PreparedCorpus prepare_corpus(const RunConfig& config);

struct PreparedSequence {
  std::vector<Segment> segments;
  TemporalSequence sequence;
  SequenceStats stats;
};

PreparedSequence prepare_sequence(const PreparedCorpus& corpus, const SequenceConfig& config);

// Model config with n_categories taken from the corpus.
ModelConfig resolved_model_config(const RunConfig& config, const PreparedCorpus& corpus);

// Stable hex digest of the checkpoint's arrays and step.
std::string checkpoint_id(const Checkpoint& checkpoint);

// Eval-mode report for a trained checkpoint on the prepared corpus.
EvalReport evaluate_checkpoint(const RunConfig& config, const PreparedCorpus& corpus, const Checkpoint& checkpoint);

// scatter_<tap>.bmp (points colored by context) and ooo_bars.bmp (groups are
// taps, bars are context/category/instance accuracy, dashed line at chance).
void write_report_plots(const std::filesystem::path& dir, const EvalReport& report);

struct ExperimentResult {
  PreparedSequence sequence;
  TrainResult training;
  EvalReport report;
};

// seqgen -> train -> eval for one configuration. When out_dir is set, writes
// config.cfg, sequence.csv, stats.txt, train_log.csv, checkpoint.bin, the
// evaluation report and its plots into it.
ExperimentResult run_experiment(const RunConfig& config, const PreparedCorpus& corpus,
                                const std::optional<std::filesystem::path>& out_dir = std::nullopt);

std::string format_stats(const SequenceStats& stats);

}  // namespace slowsem
