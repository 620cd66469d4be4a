#include "slowsem/pipeline.hpp"

#include <cstdio>
#include <fstream>

#include "slowsem/errors.hpp"
#include "slowsem/plot.hpp"

namespace slowsem {

PreparedCorpus prepare_corpus(const RunConfig& config) {
  CorpusManifest manifest;
  ContextAssignment base;
  if (config.corpus_dir.empty()) {
    SynthCorpus synth = synthesize_corpus(config.synth, config.seed_data);
    manifest = std::move(synth.manifest);
    base = std::move(synth.base_assignment);
  } else {
    const std::filesystem::path dir = config.corpus_dir;
    manifest = load_manifest(dir / "manifest.csv");
    base = load_context_mapping(dir / "contexts.csv", manifest);
  }
  base = assign_contexts(manifest, base, AssignmentMode::Fixed, 0);
  PreparedCorpus out;
  if (config.balance) {
    BalancedCorpus balanced = balance_corpus(manifest, base);
    out.manifest = std::move(balanced.manifest);
    base = std::move(balanced.assignment);
  } else {
    out.manifest = std::move(manifest);
  }
  out.assignment = assign_contexts(out.manifest, base, config.assignment, config.assign_seed);
  return out;
}

PreparedSequence prepare_sequence(const PreparedCorpus& corpus, const SequenceConfig& config) {
  PreparedSequence out;
  out.segments = split_clips(train_clips(corpus.manifest), config.gamma, config.seed);
  out.sequence = build_sequence(out.segments, corpus.assignment, config);
  out.stats = measure_stats(out.sequence, out.segments.size());
  return out;
}

ModelConfig resolved_model_config(const RunConfig& config, const PreparedCorpus& corpus) {
  ModelConfig m = config.model;
  m.n_categories = static_cast<int>(corpus.manifest.categories.size());
  return m;
}

std::string checkpoint_id(const Checkpoint& checkpoint) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001b3ULL;
    }
  };
  mix(&checkpoint.step, sizeof checkpoint.step);
  for (const auto& [name, m] : checkpoint.arrays) {
    if (name.ends_with(".adam_m") || name.ends_with(".adam_v")) continue;
    mix(name.data(), name.size());
    mix(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double));
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_stats(const SequenceStats& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "segments=%zu boundaries=%zu forced=%zu switches=%zu switch_rate=%.6f coverage=%.6f", s.n_segments,
                s.n_boundaries, s.n_forced, s.n_switches, s.empirical_switch_rate, s.clip_coverage_fraction);
  std::string out = buf;
  out += " dwell=";
  bool first = true;
  for (const auto& [len, count] : s.context_dwell_lengths) {
    out += (first ? "" : ";") + std::to_string(len) + ":" + std::to_string(count);
    first = false;
  }
  return out;
}

EvalReport evaluate_checkpoint(const RunConfig& config, const PreparedCorpus& corpus, const Checkpoint& checkpoint) {
  auto model = model_from_checkpoint(checkpoint);
  char pc[32];
  std::snprintf(pc, sizeof pc, "%.6g", config.sequence.p_c);
  return full_report(*model, corpus.manifest, corpus.assignment, config.eval,
                     {{"checkpoint", checkpoint_id(checkpoint)},
                      {"step", std::to_string(checkpoint.step)},
                      {"p_c", pc},
                      {"loss_mode", to_string(config.train.loss_mode)},
                      {"assignment", to_string(corpus.assignment.mode)},
                      {"seed_data", std::to_string(config.seed_data)},
                      {"seed_model", std::to_string(config.seed_model)},
                      {"seed_eval", std::to_string(config.seed_eval)}});
}

void write_report_plots(const std::filesystem::path& dir, const EvalReport& report) {
  for (const auto& [tap, coords] : report.projections) {
    if (coords.cols() == 0) continue;
    write_scatter_plot(dir / (std::string("scatter_") + to_string(tap) + ".bmp"), coords, report.bundle.context);
  }
  std::vector<std::vector<double>> groups;
  for (LayerTap tap : kAllTaps) {
    std::vector<double> bars;
    for (LabelType type : kAllLabelTypes) {
      auto it = report.ooo.find({tap, type});
      bars.push_back(it == report.ooo.end() ? 0.0 : it->second);
    }
    groups.push_back(std::move(bars));
  }
  write_bar_chart(dir / "ooo_bars.bmp", groups, 1.0 / 3.0);
}

ExperimentResult run_experiment(const RunConfig& config, const PreparedCorpus& corpus,
                                const std::optional<std::filesystem::path>& out_dir) {
  ExperimentResult result;
  result.sequence = prepare_sequence(corpus, config.sequence);
  const ModelConfig model_config = resolved_model_config(config, corpus);

  TrainOptions options;
  options.run_config_text = format_run_config(config);
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    save_run_config(*out_dir / "config.cfg", config);
    write_sequence(*out_dir / "sequence.csv", result.sequence.sequence);
    std::ofstream(*out_dir / "stats.txt") << format_stats(result.sequence.stats) << '\n';
    const auto dir = *out_dir;
    options.on_checkpoint = [dir](const Checkpoint& ck) {
      save_checkpoint(dir / "checkpoint.bin", ck);
    };
  }
  result.training = train(corpus.manifest, result.sequence.sequence, model_config, config.train, options);
  if (out_dir) write_train_log(*out_dir / "train_log.csv", result.training.log);

  result.report = evaluate_checkpoint(config, corpus, result.training.checkpoint);
  if (out_dir) {
    write_report(*out_dir, result.report);
    write_report_plots(*out_dir, result.report);
  }
  return result;
}

}  // namespace slowsem
