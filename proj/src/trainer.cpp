#include "slowsem/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include "slowsem/errors.hpp"

namespace slowsem {

bool deterministic_mode() {
  const char* v = std::getenv("SLOWSEM_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

Minibatch sample_minibatch(const TemporalSequence& sequence, const CorpusManifest& corpus,
                           int batch_size, int delta_t, double min_crop_fraction, int out_size,
                           Rng& rng) {
  if (sequence.size() < static_cast<std::size_t>(delta_t) + 1)
    throw ConfigError("sequence shorter than delta_t + 1");
  Minibatch mb;
  const auto n = static_cast<std::size_t>(batch_size);
  mb.anchors.reserve(n);
  mb.partners.reserve(n);
  for (std::size_t b = 0; b < n; ++b) {
    const auto i = static_cast<std::size_t>(rng.below(sequence.size()));
    const std::size_t j = sample_temporal_pair(sequence.size(), i, delta_t, rng);
    mb.anchor_positions.push_back(i);
    mb.partner_positions.push_back(j);
    const int fa = sequence.entries[i].frame_id;
    const int fb = sequence.entries[j].frame_id;
    mb.categories.push_back(corpus.frames.at(static_cast<std::size_t>(fa)).category);
    mb.anchors.push_back(augment_crop_resize(to_float(corpus.image(fa)), rng, out_size, min_crop_fraction));
    mb.partners.push_back(augment_crop_resize(to_float(corpus.image(fb)), rng, out_size, min_crop_fraction));
  }
  return mb;
}

StepLosses forward_backward(Model& model, const Matrix& anchor_images, const Matrix& partner_images,
                            std::span<const int> categories, const LossConfig& loss, LossMode mode) {
  const Eigen::Index P = static_cast<Eigen::Index>(model.config().image_size) * model.config().image_size;
  const Eigen::Index n = anchor_images.cols() / P;
  if (n != static_cast<Eigen::Index>(categories.size()))
    throw std::invalid_argument("forward_backward: category count differs from batch size");
  model.zero_grad();

  Matrix images;
  if (uses_ssltt(mode)) {
    if (partner_images.cols() != anchor_images.cols())
      throw std::invalid_argument("forward_backward: partner batch differs from anchor batch");
    images.resize(3, anchor_images.cols() * 2);
    images << anchor_images, partner_images;
  } else {
    images = anchor_images;
  }
  const Matrix rep = model.encoder().forward(images, true);

  StepLosses out;
  ContrastiveResult temporal, align;
  Matrix z1, z2, z3;
  if (uses_ssltt(mode)) {
    z1 = model.h1().forward(rep, true);
    temporal = contrastive_loss(z1.leftCols(n), z1.rightCols(n), loss.tau_ssltt, true);
    out.ssltt = temporal.loss;
  }
  if (uses_vla(mode)) {
    z2 = model.h2().forward(rep.leftCols(n), true);
    z3 = model.encode_category(categories, true);
    align = contrastive_loss(z2, z3, loss.tau_vla, true);
    out.vla = align.loss;
  }
  out.total = total_loss(out.ssltt, out.vla, mode);

  Matrix d_rep = Matrix::Zero(rep.rows(), rep.cols());
  if (uses_ssltt(mode)) {
    Matrix dz1(z1.rows(), z1.cols());
    dz1 << temporal.grad_anchors, temporal.grad_partners;
    d_rep += model.h1().backward(dz1);
  }
  if (uses_vla(mode)) {
    d_rep.leftCols(n) += model.h2().backward(align.grad_anchors);
    model.g().backward(align.grad_partners);
  }
  model.encoder().backward(d_rep);
  return out;
}

void write_train_log(const std::filesystem::path& path, const TrainLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write train log " + path.string());
  out << "step,ssltt_loss,vla_loss,total_loss,seconds\n";
  char buf[160];
  for (const auto& r : log.steps) {
    std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.4f\n", static_cast<long long>(r.step), r.ssltt_loss,
                  r.vla_loss, r.total_loss, r.seconds);
    out << buf;
  }
}

void append_train_log(const std::filesystem::path& path, const StepRecord& r, bool header) {
  std::ofstream out(path, header ? std::ios::binary | std::ios::trunc : std::ios::binary | std::ios::app);
  if (!out) throw IntegrityError("cannot write train log " + path.string());
  if (header) out << "step,ssltt_loss,vla_loss,total_loss,seconds\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.4f\n", static_cast<long long>(r.step), r.ssltt_loss,
                r.vla_loss, r.total_loss, r.seconds);
  out << buf;
}

std::string train_signature(const TrainConfig& c, const ModelConfig& model) {
  std::ostringstream out;
  out.precision(17);
  out << "batch_size=" << c.batch_size << '\n'
      << "learning_rate=" << c.learning_rate << '\n'
      << "weight_decay=" << c.weight_decay << '\n'
      << "tau_ssltt=" << c.loss.tau_ssltt << '\n'
      << "tau_vla=" << c.loss.tau_vla << '\n'
      << "delta_t=" << c.loss.delta_t << '\n'
      << "loss_mode=" << to_string(c.loss_mode) << '\n'
      << "min_crop_fraction=" << c.min_crop_fraction << '\n'
      << "seed=" << c.seed << '\n'
      << format_model_config(model);
  return out.str();
}

Trainer::Trainer(const CorpusManifest& corpus, const TemporalSequence& sequence,
                 const ModelConfig& model_config, const TrainConfig& train_config, TrainOptions options)
    : corpus_(corpus),
      sequence_(sequence),
      model_config_(model_config),
      config_(train_config),
      options_(std::move(options)) {
  config_.validate();
  model_config_.validate();
  if (sequence_.size() < static_cast<std::size_t>(config_.loss.delta_t) + 1)
    throw ConfigError("sequence too short for delta_t");
  for (const auto& k : corpus_.categories)
    if (k.id >= model_config_.n_categories) throw ConfigError("model n_categories smaller than corpus");
  model_ = std::make_unique<Model>(model_config_, config_.seed);
  optimizer_ = std::make_unique<AdamW>(
      model_->parameters(), AdamWConfig{config_.learning_rate, config_.weight_decay, 0.9, 0.999, 1e-8});
}

void Trainer::resume_from(const Checkpoint& ck) {
  const std::string expected = train_signature(config_, model_config_);
  if (ck.train_signature != expected) {
    std::istringstream a(ck.train_signature), b(expected);
    std::string la, lb;
    while (std::getline(a, la) && std::getline(b, lb))
      if (la != lb) throw ConfigError("checkpoint/config mismatch: checkpoint has '" + la + "', config has '" + lb + "'");
    throw ConfigError("checkpoint/config mismatch");
  }
  restore_checkpoint(ck, *model_, optimizer_.get());
  step_ = ck.step;
}

std::int64_t Trainer::steps_per_epoch() const {
  return std::max<std::int64_t>(1, static_cast<std::int64_t>(sequence_.size()) / config_.batch_size);
}

std::int64_t Trainer::total_steps() const {
  return config_.max_steps > 0 ? config_.max_steps : steps_per_epoch() * config_.epochs;
}

Minibatch Trainer::batch_for_step(std::int64_t step) const {
  Rng rng(config_.seed, "minibatch", static_cast<std::uint64_t>(step));
  return sample_minibatch(sequence_, corpus_, config_.batch_size, config_.loss.delta_t, config_.min_crop_fraction,
                          model_config_.image_size, rng);
}

std::vector<std::string> Trainer::active_groups() const {
  std::vector<std::string> groups = {"f."};
  if (uses_ssltt(config_.loss_mode)) groups.push_back("h1.");
  if (uses_vla(config_.loss_mode)) {
    groups.push_back("h2.");
    groups.push_back("g.");
  }
  return groups;
}

Checkpoint Trainer::checkpoint() {
  Checkpoint ck = capture_checkpoint(*model_, optimizer_.get(), step_);
  ck.run_config = options_.run_config_text;
  ck.train_signature = train_signature(config_, model_config_);
  return ck;
}

StepRecord Trainer::run_step() { return run_step(batch_for_step(step_)); }

StepRecord Trainer::run_step(const Minibatch& mb) {
  const auto t0 = std::chrono::steady_clock::now();
  StepLosses losses;
  try {
    losses = forward_backward(*model_, pack_images(mb.anchors), pack_images(mb.partners), mb.categories,
                              config_.loss, config_.loss_mode);
  } catch (const NumericalError& e) {
    throw TrainingAborted(std::string(e.what()) + " at step " + std::to_string(step_), checkpoint());
  }
  optimizer_->step(active_groups());
  ++step_;
  StepRecord rec;
  rec.step = step_;
  rec.ssltt_loss = losses.ssltt;
  rec.vla_loss = losses.vla;
  rec.total_loss = losses.total;
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

Checkpoint Trainer::run(TrainLog* log) {
  const std::int64_t total = total_steps();
  const std::int64_t per_epoch = steps_per_epoch();
  EpochSummary acc;
  std::int64_t in_epoch = 0;
  // Batches depend only on (seed, step), so assembling the next one on a
  // worker thread leaves the results unchanged.
  const bool prefetch = !deterministic_mode() && std::thread::hardware_concurrency() > 1;
  std::future<Minibatch> next;
  while (step_ < total) {
    Minibatch mb = next.valid() ? next.get() : batch_for_step(step_);
    if (prefetch && step_ + 1 < total)
      next = std::async(std::launch::async, [this, s = step_ + 1] { return batch_for_step(s); });
    StepRecord rec = run_step(mb);
    if (options_.on_step) options_.on_step(rec);
    if (log) {
      log->steps.push_back(rec);
      acc.mean_ssltt += rec.ssltt_loss;
      acc.mean_vla += rec.vla_loss;
      acc.mean_total += rec.total_loss;
      ++in_epoch;
      if (step_ % per_epoch == 0 || step_ == total) {
        acc.epoch = static_cast<int>((step_ - 1) / per_epoch);
        acc.mean_ssltt /= static_cast<double>(in_epoch);
        acc.mean_vla /= static_cast<double>(in_epoch);
        acc.mean_total /= static_cast<double>(in_epoch);
        log->epochs.push_back(acc);
        acc = EpochSummary{};
        in_epoch = 0;
      }
    }
    if (options_.on_checkpoint && config_.checkpoint_every > 0 && step_ % config_.checkpoint_every == 0 &&
        step_ < total)
      options_.on_checkpoint(checkpoint());
  }
  Checkpoint final_ck = checkpoint();
  if (options_.on_checkpoint) options_.on_checkpoint(final_ck);
  return final_ck;
}

TrainResult train(const CorpusManifest& corpus, const TemporalSequence& sequence,
                  const ModelConfig& model_config, const TrainConfig& train_config, TrainOptions options) {
  Trainer trainer(corpus, sequence, model_config, train_config, std::move(options));
  TrainResult result;
  result.checkpoint = trainer.run(&result.log);
  return result;
}

TrainResult resume(const Checkpoint& checkpoint, const CorpusManifest& corpus, const TemporalSequence& sequence,
                   const ModelConfig& model_config, const TrainConfig& train_config, TrainOptions options) {
  Trainer trainer(corpus, sequence, model_config, train_config, std::move(options));
  trainer.resume_from(checkpoint);
  TrainResult result;
  result.checkpoint = trainer.run(&result.log);
  return result;
}

}  // namespace slowsem
