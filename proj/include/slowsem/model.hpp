#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "slowsem/bmp.hpp"
#include "slowsem/nn.hpp"

namespace slowsem {

enum class EncoderKind { SmallConv, Residual50 };

const char* to_string(EncoderKind kind);
EncoderKind parse_encoder_kind(const std::string& text);

struct ModelConfig {
  int image_size = 32;
  EncoderKind encoder_kind = EncoderKind::SmallConv;
  int representation_dim = 128;
  int head_hidden_dim = 1024;
  int embed_dim = 512;
  int n_categories = 16;
  // small-conv: number of stride-2 conv blocks; channels double up to representation_dim.
  int conv_blocks = 4;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

enum class LayerTap { Representations = 0, SSLTT1, SSLTT2, VLA1, VLA2 };
inline constexpr std::array<LayerTap, 5> kAllTaps = {LayerTap::Representations, LayerTap::SSLTT1,
                                                     LayerTap::SSLTT2, LayerTap::VLA1, LayerTap::VLA2};
inline constexpr std::size_t kNumTaps = kAllTaps.size();

const char* to_string(LayerTap tap);
LayerTap parse_layer_tap(const std::string& text);

// Floating-point image in [0, 1], row-major with interleaved RGB.
struct FloatImage {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  FloatImage() = default;
  FloatImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0.0) {}
  double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

FloatImage to_float(const RgbImage& image);

// Packs images of identical size into a 3 x (batch*H*W) activation matrix.
Matrix pack_images(std::span<const FloatImage> images);

// Activations of one forward pass; every matrix has one column per image.
struct TapActivations {
  std::array<Matrix, kNumTaps> taps;
  Matrix z1;  // temporal embedding h1(f(x))
  Matrix z2;  // alignment embedding h2(f(x))
  const Matrix& tap(LayerTap t) const { return taps[static_cast<std::size_t>(t)]; }
};

// Per-tap embeddings of evaluation frames plus their labels.
struct EmbeddingBundle {
  std::array<Matrix, kNumTaps> taps;  // tap_dim x n_samples
  std::vector<int> frame_id;
  std::vector<int> instance;
  std::vector<int> category;
  std::vector<int> context;

  std::size_t size() const { return instance.size(); }
  const Matrix& tap(LayerTap t) const { return taps[static_cast<std::size_t>(t)]; }
  Matrix& tap(LayerTap t) { return taps[static_cast<std::size_t>(t)]; }
  bool operator==(const EmbeddingBundle& o) const;
};

// affine -> batch-norm -> relu -> affine -> batch-norm -> relu -> affine.
// The two rectifier outputs are the head's taps.
class ProjectionHead {
 public:
  ProjectionHead(int in_dim, int hidden_dim, int out_dim);
  Matrix forward(const Matrix& x, bool train) { return net_.forward(x, train); }
  Matrix backward(const Matrix& grad) { return net_.backward(grad); }
  const Matrix& hidden1() const { return net_.tap_outputs().at(0); }
  const Matrix& hidden2() const { return net_.tap_outputs().at(1); }
  Sequential& net() { return net_; }

 private:
  Sequential net_;
};

// Vision encoder f, temporal head h1, alignment head h2 and category encoder g.
class Model {
 public:
  // Deterministic fan-in-scaled uniform initialization.
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  TapActivations forward_with_taps(const Matrix& images, bool train);
  TapActivations forward_with_taps(std::span<const FloatImage> images, bool train);

  // One-hot encodes the ids and applies g. Throws std::out_of_range for bad ids.
  Matrix encode_category(std::span<const int> category_ids, bool train);
  Matrix one_hot(std::span<const int> category_ids) const;

  Sequential& encoder() { return encoder_; }
  ProjectionHead& h1() { return h1_; }
  ProjectionHead& h2() { return h2_; }
  ProjectionHead& g() { return g_; }

  // Named parameters (and batch-norm buffers) grouped as f, h1, h2, g.
  ParamSet parameters();
  ParamSet parameters(const std::string& group);
  void zero_grad();

 private:
  void build_small_conv();
  void build_residual50();

  ModelConfig config_;
  Sequential encoder_;
  ProjectionHead h1_, h2_, g_;
};

}  // namespace slowsem
