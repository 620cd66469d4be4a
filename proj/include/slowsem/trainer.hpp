#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "slowsem/checkpoint.hpp"
#include "slowsem/errors.hpp"
#include "slowsem/config.hpp"
#include "slowsem/corpus.hpp"
#include "slowsem/model.hpp"
#include "slowsem/objectives.hpp"
#include "slowsem/optimizer.hpp"
#include "slowsem/sequencer.hpp"

namespace slowsem {

// True when SLOWSEM_DETERMINISTIC=1: everything runs on the calling thread.
bool deterministic_mode();

struct Minibatch {
  std::vector<FloatImage> anchors;
  std::vector<FloatImage> partners;
  std::vector<int> categories;  // category of each anchor
  std::vector<std::size_t> anchor_positions;
  std::vector<std::size_t> partner_positions;
};

// Anchors uniformly with replacement over sequence positions, partners from the
// temporal window, both views independently cropped and resized to out_size.
Minibatch sample_minibatch(const TemporalSequence& sequence, const CorpusManifest& corpus,
                           int batch_size, int delta_t, double min_crop_fraction, int out_size,
                           Rng& rng);

struct StepLosses {
  double ssltt = 0.0;
  double vla = 0.0;
  double total = 0.0;
};

// Forward pass in training mode, loss, and backward pass. Model gradients are
// zeroed first and hold d(total)/d(param) afterwards. Throws NumericalError on
// a non-finite loss before touching any gradient.
StepLosses forward_backward(Model& model, const Matrix& anchor_images, const Matrix& partner_images,
                            std::span<const int> categories, const LossConfig& loss, LossMode mode);

struct StepRecord {
  std::int64_t step = 0;
  double ssltt_loss = 0.0;
  double vla_loss = 0.0;
  double total_loss = 0.0;
  double seconds = 0.0;
};

struct EpochSummary {
  int epoch = 0;
  double mean_ssltt = 0.0;
  double mean_vla = 0.0;
  double mean_total = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochSummary> epochs;
};

// `step,ssltt_loss,vla_loss,total_loss,seconds`
void write_train_log(const std::filesystem::path& path, const TrainLog& log);
void append_train_log(const std::filesystem::path& path, const StepRecord& record, bool header);

// Thrown when a step produces a non-finite loss. Holds the parameters as they
// were before that step.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, Checkpoint last_good)
      : NumericalError(what), last_good_(std::move(last_good)) {}
  const Checkpoint& last_good() const { return last_good_; }

 private:
  Checkpoint last_good_;
};

struct TrainOptions {
  // Receives every checkpoint (periodic and final).
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const StepRecord&)> on_step;
  std::string run_config_text;  // echoed into checkpoints
};

// Training settings that a resumed run must reproduce exactly.
std::string train_signature(const TrainConfig& config, const ModelConfig& model);

class Trainer {
 public:
  Trainer(const CorpusManifest& corpus, const TemporalSequence& sequence, const ModelConfig& model_config,
          const TrainConfig& train_config, TrainOptions options = {});

  // Restores parameters, optimizer moments and step. Throws ConfigError when
  // the checkpoint was produced under different training settings.
  void resume_from(const Checkpoint& checkpoint);

  std::int64_t steps_per_epoch() const;
  std::int64_t total_steps() const;
  std::int64_t step() const { return step_; }

  // Runs until total_steps(); returns the final checkpoint.
  Checkpoint run(TrainLog* log = nullptr);
  StepRecord run_step();
  StepRecord run_step(const Minibatch& batch);

  Model& model() { return *model_; }
  Checkpoint checkpoint();

 private:
  Minibatch batch_for_step(std::int64_t step) const;
  std::vector<std::string> active_groups() const;

  const CorpusManifest& corpus_;
  const TemporalSequence& sequence_;
  ModelConfig model_config_;
  TrainConfig config_;
  TrainOptions options_;
  std::unique_ptr<Model> model_;
  std::unique_ptr<AdamW> optimizer_;
  std::int64_t step_ = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

TrainResult train(const CorpusManifest& corpus, const TemporalSequence& sequence,
                  const ModelConfig& model_config, const TrainConfig& train_config,
                  TrainOptions options = {});

TrainResult resume(const Checkpoint& checkpoint, const CorpusManifest& corpus,
                   const TemporalSequence& sequence, const ModelConfig& model_config,
                   const TrainConfig& train_config, TrainOptions options = {});

}  // namespace slowsem
