#include "slowsem/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "slowsem/errors.hpp"
#include "slowsem/pipeline.hpp"
#include "slowsem/plot.hpp"

namespace slowsem {
namespace {

namespace fs = std::filesystem;

struct CliOptions {
  std::string config_path;
  std::string out_dir;
  std::string corpus_dir;
  std::string checkpoint_path;
  std::string resume_path;
  std::string pc_list;
  std::vector<std::string> sets;
  bool force = false;
  std::optional<double> pc;
  std::optional<std::string> loss;
  std::optional<std::string> assignment;
  std::optional<std::uint64_t> assign_seed;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> seed_data;
  std::optional<std::uint64_t> seed_model;
  std::optional<std::uint64_t> seed_eval;
};

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Config file (or base_text) first, then `--set key=value` lines, then the
// dedicated flags.
RunConfig resolve_config(const CliOptions& o, const std::string& base_text = {}) {
  std::string text = o.config_path.empty() ? base_text : read_text(o.config_path);
  for (const auto& kv : o.sets) text += "\n" + kv;
  RunConfig cfg = parse_run_config(text);
  if (!o.corpus_dir.empty()) cfg.corpus_dir = o.corpus_dir;
  if (o.pc) cfg.sequence.p_c = *o.pc;
  if (o.loss) cfg.train.loss_mode = parse_loss_mode(*o.loss);
  if (o.assignment) cfg.assignment = parse_assignment_mode(*o.assignment);
  if (o.assign_seed) cfg.assign_seed = *o.assign_seed;
  if (o.seed) cfg.seed_data = cfg.seed_model = cfg.seed_eval = *o.seed;
  if (o.seed_data) cfg.seed_data = *o.seed_data;
  if (o.seed_model) cfg.seed_model = *o.seed_model;
  if (o.seed_eval) cfg.seed_eval = *o.seed_eval;
  cfg.sync_seeds();
  cfg.validate();
  return cfg;
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (dir.empty()) throw ConfigError("--out is required");
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw ConfigError("output path " + dir.string() + " is not a directory");
    if (!fs::is_empty(dir) && !force)
      throw ConfigError("output directory " + dir.string() + " is not empty (use --force to overwrite)");
  }
  fs::create_directories(dir);
}

std::string format_value(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> parse_pc_list(const std::string& text) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      double v = std::stod(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("bad value '" + item + "' in --pc-list");
    }
  }
  if (out.empty()) throw ConfigError("--pc-list is empty");
  return out;
}

void print_report_table(std::ostream& out, const EvalReport& report) {
  out << "tap";
  for (LabelType type : kAllLabelTypes) out << "," << to_string(type);
  out << ",sparsity\n";
  for (LayerTap tap : kAllTaps) {
    out << to_string(tap);
    char buf[32];
    for (LabelType type : kAllLabelTypes) {
      auto it = report.ooo.find({tap, type});
      std::snprintf(buf, sizeof buf, ",%.4f", it == report.ooo.end() ? 0.0 : it->second);
      out << buf;
    }
    auto s = report.sparsity.find(tap);
    std::snprintf(buf, sizeof buf, ",%.2f", s == report.sparsity.end() ? 0.0 : s->second);
    out << buf << "\n";
  }
}

int cmd_synth(const CliOptions& o, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  const fs::path dir = o.out_dir;
  prepare_out_dir(dir, o.force);
  SynthCorpus corpus = synthesize_corpus(cfg.synth, cfg.seed_data);
  write_corpus(dir, corpus.manifest, corpus.base_assignment);
  save_run_config(dir / "config.cfg", cfg);
  out << "clips=" << corpus.manifest.clips.size() << " frames=" << corpus.manifest.frames.size()
      << " categories=" << corpus.manifest.categories.size()
      << " contexts=" << corpus.base_assignment.n_contexts() << "\n";
  return kExitOk;
}

int cmd_seqgen(const CliOptions& o, std::ostream& out) {
  RunConfig cfg = resolve_config(o);
  const fs::path dir = o.out_dir;
  prepare_out_dir(dir, o.force);
  PreparedCorpus corpus = prepare_corpus(cfg);
  PreparedSequence seq = prepare_sequence(corpus, cfg.sequence);
  save_run_config(dir / "config.cfg", cfg);
  write_sequence(dir / "sequence.csv", seq.sequence);
  const std::string stats = format_stats(seq.stats);
  std::ofstream(dir / "stats.txt") << stats << '\n';
  out << stats << "\n";
  return kExitOk;
}

int cmd_train(const CliOptions& o, std::ostream& out, std::ostream& err) {
  std::optional<Checkpoint> resume_from;
  std::string base_text;
  if (!o.resume_path.empty()) {
    resume_from = load_checkpoint(o.resume_path);
    base_text = resume_from->run_config;
  }
  RunConfig cfg = resolve_config(o, base_text);
  const fs::path dir = o.out_dir;
  prepare_out_dir(dir, o.force || resume_from.has_value());

  PreparedCorpus corpus = prepare_corpus(cfg);
  PreparedSequence seq = prepare_sequence(corpus, cfg.sequence);
  save_run_config(dir / "config.cfg", cfg);
  write_sequence(dir / "sequence.csv", seq.sequence);
  std::ofstream(dir / "stats.txt") << format_stats(seq.stats) << '\n';

  const fs::path log_path = dir / "train_log.csv";
  if (!resume_from) fs::remove(log_path);
  bool header = !fs::exists(log_path);
  TrainOptions options;
  options.run_config_text = format_run_config(cfg);
  const bool periodic = cfg.train.checkpoint_every > 0;
  options.on_checkpoint = [&](const Checkpoint& ck) {
    save_checkpoint(dir / "checkpoint.bin", ck);
    if (periodic) save_checkpoint(dir / ("checkpoint_" + std::to_string(ck.step) + ".bin"), ck);
  };
  options.on_step = [&](const StepRecord& r) {
    append_train_log(log_path, r, header);
    header = false;
  };

  const ModelConfig model_config = resolved_model_config(cfg, corpus);
  TrainResult result;
  try {
    result = resume_from ? resume(*resume_from, corpus.manifest, seq.sequence, model_config, cfg.train, options)
                         : train(corpus.manifest, seq.sequence, model_config, cfg.train, options);
  } catch (const TrainingAborted& e) {
    save_checkpoint(dir / "checkpoint_last_good.bin", e.last_good());
    err << "training aborted: " << e.what() << " (last good checkpoint at step " << e.last_good().step << ")\n";
    return kExitNumerical;
  }
  if (!result.log.steps.empty()) {
    const auto& first = result.log.steps.front();
    const auto& last = result.log.steps.back();
    out << "steps=" << last.step << " initial_loss=" << first.total_loss << " final_loss=" << last.total_loss
        << "\n";
  }
  return kExitOk;
}

int cmd_eval(const CliOptions& o, std::ostream& out) {
  if (o.checkpoint_path.empty()) throw ConfigError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(o.checkpoint_path);
  RunConfig cfg = resolve_config(o, ck.run_config);
  const fs::path dir = o.out_dir;
  prepare_out_dir(dir, o.force);
  PreparedCorpus corpus = prepare_corpus(cfg);
  EvalReport report = evaluate_checkpoint(cfg, corpus, ck);
  save_run_config(dir / "config.cfg", cfg);
  write_report(dir, report);
  write_report_plots(dir, report);
  print_report_table(out, report);
  return kExitOk;
}

int cmd_report(const CliOptions& o, std::ostream& out) {
  if (o.out_dir.empty()) throw ConfigError("--out is required");
  EvalReport report = read_report(o.out_dir);
  write_report_plots(o.out_dir, report);
  print_report_table(out, report);
  return kExitOk;
}

int exit_code_of(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const ConfigError&) {
    return kExitConfig;
  } catch (const IntegrityError&) {
    return kExitIntegrity;
  } catch (const NumericalError&) {
    return kExitNumerical;
  } catch (...) {
    return kExitFailure;
  }
}

int cmd_sweep(const CliOptions& o, std::ostream& out, std::ostream& err) {
  const std::vector<double> values = parse_pc_list(o.pc_list);
  RunConfig base = resolve_config(o);
  const fs::path dir = o.out_dir;
  prepare_out_dir(dir, o.force);
  save_run_config(dir / "config.cfg", base);
  PreparedCorpus corpus = prepare_corpus(base);

  std::vector<double> done_pc;
  std::vector<std::vector<double>> series(kNumTaps);
  std::ofstream table(dir / "sweep.csv", std::ios::binary);
  table << "p_c";
  for (LayerTap tap : kAllTaps) table << "," << to_string(tap);
  table << "\n";
  int status = kExitOk;
  for (double pc : values) {
    RunConfig cfg = base;
    cfg.sequence.p_c = pc;
    const fs::path run_dir = dir / ("pc_" + format_value(pc));
    table << format_value(pc);
    try {
      cfg.validate();
      fs::create_directories(run_dir);
      ExperimentResult r = run_experiment(cfg, corpus, run_dir);
      done_pc.push_back(pc);
      for (LayerTap tap : kAllTaps) {
        const double acc = r.report.accuracy(tap, LabelType::Context);
        series[static_cast<std::size_t>(tap)].push_back(acc);
        char buf[32];
        std::snprintf(buf, sizeof buf, ",%.6f", acc);
        table << buf;
      }
      out << "p_c=" << format_value(pc) << " done\n";
    } catch (const std::exception& e) {
      const int code = exit_code_of(std::current_exception());
      if (status == kExitOk) status = code;
      for (std::size_t i = 0; i < kNumTaps; ++i) table << ",failed";
      err << "p_c=" << format_value(pc) << " failed: " << e.what() << "\n";
    }
    table << "\n";
    table.flush();
  }
  table.close();
  if (!done_pc.empty()) write_line_chart(dir / "sweep_context_ooo.bmp", done_pc, series, 1.0 / 3.0);
  std::ifstream in(dir / "sweep.csv");
  out << in.rdbuf();
  return status;
}

void add_config_options(CLI::App* sub, CliOptions& o) {
  sub->add_option("--config", o.config_path, "Run config file (key = value lines)");
  sub->add_option("--out", o.out_dir, "Output directory")->required();
  sub->add_flag("--force", o.force, "Write into a non-empty output directory");
  sub->add_option("--set", o.sets, "Override a config key, e.g. --set train.epochs=2");
  sub->add_option("--seed", o.seed, "Set the data, model and eval seeds at once");
  sub->add_option("--seed-data", o.seed_data, "Seed for corpus synthesis and sequence generation");
  sub->add_option("--seed-model", o.seed_model, "Seed for initialization and minibatch sampling");
  sub->add_option("--seed-eval", o.seed_eval, "Seed for test-set subsampling and triplets");
}

void add_data_options(CLI::App* sub, CliOptions& o) {
  sub->add_option("--corpus", o.corpus_dir, "Corpus directory with manifest.csv and contexts.csv");
  sub->add_option("--assignment", o.assignment, "Category to context assignment")
      ->check(CLI::IsMember({"fixed", "shuffled"}));
  sub->add_option("--assign-seed", o.assign_seed, "Seed of the shuffled assignment");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Temporal-slowness and visuo-language contrastive training on object sequences"};
  app.require_subcommand(1);
  CliOptions o;

  auto* synth = app.add_subcommand("synth", "Render the procedural corpus");
  add_config_options(synth, o);

  auto* seqgen = app.add_subcommand("seqgen", "Build a temporal sequence and print its statistics");
  add_config_options(seqgen, o);
  add_data_options(seqgen, o);
  seqgen->add_option("--pc", o.pc, "Context transition probability");

  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_config_options(train_cmd, o);
  add_data_options(train_cmd, o);
  train_cmd->add_option("--pc", o.pc, "Context transition probability");
  train_cmd->add_option("--loss", o.loss, "Training objective")->check(CLI::IsMember({"ssltt", "vla", "both"}));
  train_cmd->add_option("--resume", o.resume_path, "Continue from a checkpoint");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_config_options(eval, o);
  add_data_options(eval, o);
  eval->add_option("--checkpoint", o.checkpoint_path, "Checkpoint file")->required();

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate one model per p_c value");
  add_config_options(sweep, o);
  add_data_options(sweep, o);
  sweep->add_option("--loss", o.loss, "Training objective")->check(CLI::IsMember({"ssltt", "vla", "both"}));
  sweep->add_option("--pc-list", o.pc_list, "Comma-separated p_c values")->required();

  auto* report = app.add_subcommand("report", "Re-plot and print an existing evaluation");
  report->add_option("--out", o.out_dir, "Evaluation directory containing report.txt")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (seqgen->parsed()) return cmd_seqgen(o, out);
    if (train_cmd->parsed()) return cmd_train(o, out, err);
    if (eval->parsed()) return cmd_eval(o, out);
    if (sweep->parsed()) return cmd_sweep(o, out, err);
    if (report->parsed()) return cmd_report(o, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_of(std::current_exception());
  }
  return kExitFailure;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace slowsem
