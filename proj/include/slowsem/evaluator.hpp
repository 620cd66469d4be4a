#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "slowsem/config.hpp"
#include "slowsem/corpus.hpp"
#include "slowsem/model.hpp"

namespace slowsem {

enum class LabelType { Context = 0, Category, Instance };
inline constexpr std::array<LabelType, 3> kAllLabelTypes = {LabelType::Context, LabelType::Category,
                                                            LabelType::Instance};

const char* to_string(LabelType type);
LabelType parse_label_type(const std::string& text);

struct TripletTask {
  LabelType label_type = LabelType::Context;
  int n_triplets = 10000;
  std::uint64_t seed = 1;
  // Same-label partners must additionally differ from the anchor in this label.
  LabelExclusion exclusion = LabelExclusion::None;
};

// Eval-mode forward over a seed-deterministic sample of at most max_samples
// test frames (kept in frame-id order), no augmentation.
EmbeddingBundle embed_test_set(Model& model, const CorpusManifest& corpus, const ContextAssignment& assignment,
                               int max_samples, std::uint64_t seed);

const std::vector<int>& labels_of(const EmbeddingBundle& bundle, LabelType type);

// Odd-one-out accuracy. Each triplet draws an anchor uniformly among samples
// that have a valid same-label partner, one same-label sample (never the
// anchor itself) and one different-label sample; it succeeds iff
// cos(anchor, same) is strictly greater than both other pairwise cosines.
double ooo_accuracy(const EmbeddingBundle& bundle, LayerTap tap, const TripletTask& task);

// Same computation on raw embeddings (one column per sample). exclusion_labels
// may be empty when task.exclusion is None.
double ooo_accuracy(const Matrix& embeddings, const std::vector<int>& labels,
                    const std::vector<int>& exclusion_labels, const TripletTask& task);

// Mean percentage of exactly-zero activations per sample.
double sparsity(const Matrix& activations);
double sparsity(const EmbeddingBundle& bundle, LayerTap tap);

// Mean-centered projection onto the top two principal directions, returned as
// 2 x n. Each direction is signed so that its first non-negligible loading is
// positive. Throws std::invalid_argument for n < 3 or zero variance.
Matrix project_2d(const Matrix& embeddings);

struct EvalReport {
  std::map<std::string, std::string> metadata;
  std::map<std::pair<LayerTap, LabelType>, double> ooo;
  std::map<LayerTap, double> sparsity;
  std::map<LayerTap, Matrix> projections;
  EmbeddingBundle bundle;  // labels for the projection side-car files

  double accuracy(LayerTap tap, LabelType type) const { return ooo.at({tap, type}); }
};

EvalReport full_report(Model& model, const CorpusManifest& corpus, const ContextAssignment& assignment,
                       const EvalConfig& config, std::map<std::string, std::string> metadata = {});

// Canonical nested key-value text; projections are not included.
std::string format_report(const EvalReport& report);
EvalReport parse_report(const std::string& text);

// report.txt plus projection_<tap>.csv (`index,x,y,instance,category,context`).
void write_report(const std::filesystem::path& dir, const EvalReport& report);
EvalReport read_report(const std::filesystem::path& dir);

}  // namespace slowsem
