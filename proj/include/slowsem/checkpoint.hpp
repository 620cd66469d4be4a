#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>

#include "slowsem/model.hpp"
#include "slowsem/nn.hpp"

namespace slowsem {

class AdamW;

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Binary container: "SLOWSEMCKPT" tag, format version, the resolved run config
// text, the model config, training step, and named double arrays (parameters,
// batch-norm statistics, optimizer moments).
struct Checkpoint {
  std::string run_config;
  std::string train_signature;  // training settings a resume must agree with
  ModelConfig model;
  std::int64_t step = 0;
  std::int64_t optimizer_steps = 0;
  std::map<std::string, Matrix> arrays;
};

std::string format_model_config(const ModelConfig& config);
ModelConfig parse_model_config(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies parameters, buffers and (when given) optimizer moments.
Checkpoint capture_checkpoint(Model& model, AdamW* optimizer, std::int64_t step);
// Throws IntegrityError when an array is missing or has the wrong shape.
void restore_checkpoint(const Checkpoint& checkpoint, Model& model, AdamW* optimizer);

// Builds a model from the checkpoint's config and loads its weights.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& checkpoint);

}  // namespace slowsem
