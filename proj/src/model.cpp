#include "slowsem/model.hpp"

#include <stdexcept>

#include "slowsem/errors.hpp"

namespace slowsem {

const char* to_string(EncoderKind kind) {
  return kind == EncoderKind::SmallConv ? "small-conv" : "residual-50";
}

EncoderKind parse_encoder_kind(const std::string& text) {
  if (text == "small-conv") return EncoderKind::SmallConv;
  if (text == "residual-50") return EncoderKind::Residual50;
  throw ConfigError("unknown encoder kind '" + text + "'");
}

const char* to_string(LayerTap tap) {
  switch (tap) {
    case LayerTap::Representations: return "Representations";
    case LayerTap::SSLTT1: return "SSLTT1";
    case LayerTap::SSLTT2: return "SSLTT2";
    case LayerTap::VLA1: return "VLA1";
    case LayerTap::VLA2: return "VLA2";
  }
  return "?";
}

LayerTap parse_layer_tap(const std::string& text) {
  for (LayerTap t : kAllTaps)
    if (text == to_string(t)) return t;
  throw ConfigError("unknown layer tap '" + text + "'");
}

void ModelConfig::validate() const {
  if (image_size < 1 || representation_dim < 1 || head_hidden_dim < 1 || embed_dim < 1 || n_categories < 1)
    throw ConfigError("model dimensions must be >= 1");
  if (encoder_kind == EncoderKind::SmallConv && conv_blocks < 1)
    throw ConfigError("conv_blocks must be >= 1");
  if (encoder_kind == EncoderKind::Residual50 && representation_dim != 2048)
    throw ConfigError("residual-50 encoder produces 2048-d representations");
}

bool EmbeddingBundle::operator==(const EmbeddingBundle& o) const {
  if (frame_id != o.frame_id || instance != o.instance || category != o.category || context != o.context)
    return false;
  for (std::size_t t = 0; t < kNumTaps; ++t)
    if (taps[t].rows() != o.taps[t].rows() || taps[t].cols() != o.taps[t].cols() || taps[t] != o.taps[t])
      return false;
  return true;
}

FloatImage to_float(const RgbImage& image) {
  FloatImage out(image.width, image.height);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.data[i] = image.pixels[i] / 255.0;
  return out;
}

Matrix pack_images(std::span<const FloatImage> images) {
  if (images.empty()) throw std::invalid_argument("pack_images: empty batch");
  const int W = images.front().width, H = images.front().height;
  const Eigen::Index P = static_cast<Eigen::Index>(W) * H;
  Matrix out(3, P * static_cast<Eigen::Index>(images.size()));
  for (std::size_t b = 0; b < images.size(); ++b) {
    if (images[b].width != W || images[b].height != H)
      throw std::invalid_argument("pack_images: images differ in size");
    out.middleCols(static_cast<Eigen::Index>(b) * P, P) =
        Eigen::Map<const Matrix>(images[b].data.data(), 3, P);
  }
  return out;
}

ProjectionHead::ProjectionHead(int in_dim, int hidden_dim, int out_dim) {
  net_.emplace<Linear>("fc1", in_dim, hidden_dim);
  net_.emplace<BatchNorm>("bn1", hidden_dim);
  net_.emplace<ReLU>("relu1");
  net_.mark_tap();
  net_.emplace<Linear>("fc2", hidden_dim, hidden_dim);
  net_.emplace<BatchNorm>("bn2", hidden_dim);
  net_.emplace<ReLU>("relu2");
  net_.mark_tap();
  net_.emplace<Linear>("fc3", hidden_dim, out_dim);
}

Model::Model(const ModelConfig& config, std::uint64_t seed)
    : config_((config.validate(), config)),
      h1_(config.representation_dim, config.head_hidden_dim, config.embed_dim),
      h2_(config.representation_dim, config.head_hidden_dim, config.embed_dim),
      g_(config.n_categories, config.head_hidden_dim, config.embed_dim) {
  if (config_.encoder_kind == EncoderKind::SmallConv)
    build_small_conv();
  else
    build_residual50();
  encoder_.init("f", seed);
  h1_.net().init("h1", seed);
  h2_.net().init("h2", seed);
  g_.net().init("g", seed);
}

void Model::build_small_conv() {
  SpatialShape shape{3, config_.image_size, config_.image_size};
  for (int b = 0; b < config_.conv_blocks; ++b) {
    const int channels = std::max(1, config_.representation_dim >> (config_.conv_blocks - 1 - b));
    const std::string idx = std::to_string(b);
    auto& conv = encoder_.emplace<Conv2d>("conv" + idx, shape, channels, 3, 2, 1);
    shape = conv.output_shape();
    encoder_.emplace<BatchNorm>("bn" + idx, channels);
    encoder_.emplace<ReLU>("relu" + idx);
  }
  encoder_.emplace<GlobalAvgPool>("pool", shape);
}

void Model::build_residual50() {
  SpatialShape shape{3, config_.image_size, config_.image_size};
  auto& stem = encoder_.emplace<Conv2d>("stem", shape, 64, 7, 2, 3);
  shape = stem.output_shape();
  encoder_.emplace<BatchNorm>("stem_bn", 64);
  encoder_.emplace<ReLU>("stem_relu");
  auto& pool = encoder_.emplace<MaxPool2d>("stem_pool", shape, 3, 2, 1);
  shape = pool.output_shape();

  const std::array<int, 4> depth = {3, 4, 6, 3};
  const std::array<int, 4> width = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    for (int block = 0; block < depth[static_cast<std::size_t>(stage)]; ++block) {
      const int w = width[static_cast<std::size_t>(stage)];
      const int out_c = 4 * w;
      const int stride = (block == 0 && stage > 0) ? 2 : 1;
      auto main = std::make_unique<Sequential>();
      auto& c1 = main->emplace<Conv2d>("conv1", shape, w, 1, 1, 0);
      main->emplace<BatchNorm>("bn1", w);
      main->emplace<ReLU>("relu1");
      auto& c2 = main->emplace<Conv2d>("conv2", c1.output_shape(), w, 3, stride, 1);
      main->emplace<BatchNorm>("bn2", w);
      main->emplace<ReLU>("relu2");
      auto& c3 = main->emplace<Conv2d>("conv3", c2.output_shape(), out_c, 1, 1, 0);
      main->emplace<BatchNorm>("bn3", out_c);
      std::unique_ptr<Sequential> shortcut;
      if (block == 0) {
        shortcut = std::make_unique<Sequential>();
        shortcut->emplace<Conv2d>("conv", shape, out_c, 1, stride, 0);
        shortcut->emplace<BatchNorm>("bn", out_c);
      }
      const SpatialShape next = c3.output_shape();
      encoder_.add(std::make_unique<ResidualBlock>(std::move(main), std::move(shortcut)),
                   "layer" + std::to_string(stage + 1) + "_" + std::to_string(block));
      shape = next;
    }
  }
  encoder_.emplace<GlobalAvgPool>("pool", shape);
}

TapActivations Model::forward_with_taps(const Matrix& images, bool train) {
  const Eigen::Index P = static_cast<Eigen::Index>(config_.image_size) * config_.image_size;
  if (images.rows() != 3 || images.cols() == 0 || images.cols() % P != 0)
    throw std::invalid_argument("forward_with_taps: images must be 3 x (batch*" +
                                std::to_string(config_.image_size) + "^2)");
  TapActivations out;
  const Matrix rep = encoder_.forward(images, train);
  out.z1 = h1_.forward(rep, train);
  out.z2 = h2_.forward(rep, train);
  out.taps[static_cast<std::size_t>(LayerTap::Representations)] = rep;
  out.taps[static_cast<std::size_t>(LayerTap::SSLTT1)] = h1_.hidden1();
  out.taps[static_cast<std::size_t>(LayerTap::SSLTT2)] = h1_.hidden2();
  out.taps[static_cast<std::size_t>(LayerTap::VLA1)] = h2_.hidden1();
  out.taps[static_cast<std::size_t>(LayerTap::VLA2)] = h2_.hidden2();
  return out;
}

TapActivations Model::forward_with_taps(std::span<const FloatImage> images, bool train) {
  for (const auto& img : images)
    if (img.width != config_.image_size || img.height != config_.image_size)
      throw std::invalid_argument("forward_with_taps: image size does not match model config");
  return forward_with_taps(pack_images(images), train);
}

Matrix Model::one_hot(std::span<const int> category_ids) const {
  Matrix x = Matrix::Zero(config_.n_categories, static_cast<Eigen::Index>(category_ids.size()));
  for (std::size_t i = 0; i < category_ids.size(); ++i) {
    const int id = category_ids[i];
    if (id < 0 || id >= config_.n_categories)
      throw std::out_of_range("category id " + std::to_string(id) + " outside [0, " +
                              std::to_string(config_.n_categories) + ")");
    x(id, static_cast<Eigen::Index>(i)) = 1.0;
  }
  return x;
}

Matrix Model::encode_category(std::span<const int> category_ids, bool train) {
  return g_.forward(one_hot(category_ids), train);
}

ParamSet Model::parameters() {
  ParamSet out;
  encoder_.collect("f", out);
  h1_.net().collect("h1", out);
  h2_.net().collect("h2", out);
  g_.net().collect("g", out);
  return out;
}

ParamSet Model::parameters(const std::string& group) {
  ParamSet out;
  if (group == "f")
    encoder_.collect("f", out);
  else if (group == "h1")
    h1_.net().collect("h1", out);
  else if (group == "h2")
    h2_.net().collect("h2", out);
  else if (group == "g")
    g_.net().collect("g", out);
  else
    throw std::invalid_argument("unknown parameter group " + group);
  return out;
}

void Model::zero_grad() {
  for (auto& p : parameters().params) p.grad->setZero();
}

}  // namespace slowsem
