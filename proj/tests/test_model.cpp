#include <doctest.h>

#include "oracles.hpp"
#include "slowsem/errors.hpp"
#include "slowsem/model.hpp"
#include "slowsem/rng.hpp"
#include "slowsem/trainer.hpp"

using namespace slowsem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.image_size = 16;
  c.conv_blocks = 3;
  c.representation_dim = 16;
  c.head_hidden_dim = 24;
  c.embed_dim = 12;
  c.n_categories = 5;
  return c;
}

Matrix random_images(int n, int size, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(3, static_cast<Eigen::Index>(n) * size * size);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform01();
  return m;
}

bool same_parameters(Model& a, Model& b) {
  ParamSet pa = a.parameters(), pb = b.parameters();
  if (pa.params.size() != pb.params.size()) return false;
  for (std::size_t i = 0; i < pa.params.size(); ++i)
    if (pa.params[i].name != pb.params[i].name || *pa.params[i].value != *pb.params[i].value) return false;
  return true;
}

}  // namespace

TEST_CASE("same config and seed give identical parameters") {
  Model a(small_config(), 3), b(small_config(), 3), c(small_config(), 4);
  CHECK(same_parameters(a, b));
  CHECK_FALSE(same_parameters(a, c));
}

TEST_CASE("tap and embedding shapes follow the config") {
  ModelConfig cfg = small_config();
  Model m(cfg, 1);
  for (int n : {1, 3}) {
    TapActivations t = m.forward_with_taps(random_images(n, 16, 2), false);
    CHECK(t.tap(LayerTap::Representations).rows() == cfg.representation_dim);
    for (LayerTap tap : {LayerTap::SSLTT1, LayerTap::SSLTT2, LayerTap::VLA1, LayerTap::VLA2})
      CHECK(t.tap(tap).rows() == cfg.head_hidden_dim);
    for (LayerTap tap : kAllTaps) CHECK(t.tap(tap).cols() == n);
    CHECK(t.z1.rows() == cfg.embed_dim);
    CHECK(t.z2.rows() == cfg.embed_dim);
    CHECK(t.z1.cols() == n);
  }
}

TEST_CASE("paper head sizes: hidden 1024, embedding 512") {
  ModelConfig cfg;
  cfg.n_categories = 4;
  Model m(cfg, 1);
  TapActivations t = m.forward_with_taps(random_images(2, 32, 1), true);
  CHECK(t.z1.rows() == 512);
  CHECK(t.tap(LayerTap::SSLTT1).rows() == 1024);
  CHECK(t.tap(LayerTap::VLA2).rows() == 1024);
  CHECK(t.tap(LayerTap::Representations).rows() == 128);
}

TEST_CASE("eval mode is a pure function of the input") {
  Model m(small_config(), 1);
  // A training pass moves the running statistics away from their initial values.
  m.forward_with_taps(random_images(4, 16, 3), true);
  Matrix zeros = Matrix::Zero(3, 2 * 16 * 16);
  TapActivations a = m.forward_with_taps(zeros, false);
  TapActivations b = m.forward_with_taps(zeros, false);
  for (LayerTap tap : kAllTaps) CHECK(a.tap(tap) == b.tap(tap));
  CHECK(a.z1 == b.z1);
}

TEST_CASE("head taps are rectified") {
  Model m(small_config(), 2);
  for (bool train : {true, false}) {
    TapActivations t = m.forward_with_taps(random_images(6, 16, 4), train);
    for (LayerTap tap : kAllTaps) CHECK(t.tap(tap).minCoeff() >= 0.0);
  }
}

TEST_CASE("category encoder is a function of the label") {
  ModelConfig cfg = small_config();
  Model m(cfg, 1);
  const std::vector<int> ids = {2, 0, 2, 4};
  Matrix z3 = m.encode_category(ids, false);
  CHECK(z3.rows() == cfg.embed_dim);
  CHECK(z3.cols() == 4);
  CHECK(z3.col(0) == z3.col(2));
  CHECK(z3.col(0) != z3.col(1));
  CHECK_THROWS_AS(m.encode_category(std::vector<int>{5}, false), std::out_of_range);
  CHECK_THROWS_AS(m.encode_category(std::vector<int>{-1}, false), std::out_of_range);
}

TEST_CASE("one-hot input spans all 80 categories") {
  ModelConfig cfg = small_config();
  cfg.n_categories = 80;
  Model m(cfg, 1);
  Matrix x = m.one_hot(std::vector<int>{79, 3});
  CHECK(x.rows() == 80);
  CHECK(x(79, 0) == 1.0);
  CHECK(x.col(0).sum() == 1.0);
  CHECK(m.encode_category(std::vector<int>{79}, false).rows() == cfg.embed_dim);
}

TEST_CASE("every parameter group receives gradient from the total loss") {
  ModelConfig cfg = small_config();
  Model m(cfg, 5);
  const std::vector<int> cats = {0, 1, 2, 3};
  forward_backward(m, random_images(4, 16, 1), random_images(4, 16, 2), cats, LossConfig{}, LossMode::Both);
  for (const std::string group : {"f", "h1", "h2", "g"}) {
    double norm = 0.0;
    for (const auto& p : m.parameters(group).params) norm += p.grad->squaredNorm();
    CAPTURE(group);
    CHECK(norm > 0.0);
  }
}

TEST_CASE("ablation modes leave the unused heads without gradient") {
  Model m(small_config(), 5);
  const std::vector<int> cats = {0, 1, 2, 3};
  forward_backward(m, random_images(4, 16, 1), random_images(4, 16, 2), cats, LossConfig{}, LossMode::SSLTT);
  for (const auto& p : m.parameters("h2").params) CHECK(p.grad->squaredNorm() == 0.0);
  for (const auto& p : m.parameters("g").params) CHECK(p.grad->squaredNorm() == 0.0);
  forward_backward(m, random_images(4, 16, 1), random_images(4, 16, 2), cats, LossConfig{}, LossMode::VLA);
  for (const auto& p : m.parameters("h1").params) CHECK(p.grad->squaredNorm() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  const auto r = oracle::tiny_model_gradient_check(1e-4, 1e-4, 1e-6);
  CAPTURE(r.n_checked);
  CAPTURE(r.worst_relative_error);
  CHECK(r.n_checked > 500);
  CHECK(static_cast<double>(r.n_within_tol) >= 0.95 * static_cast<double>(r.n_checked));
  CHECK(r.worst_relative_error <= 1e-3);
}

TEST_CASE("residual-50 encoder produces a 2048-dimensional representation") {
  ModelConfig cfg;
  cfg.encoder_kind = EncoderKind::Residual50;
  cfg.representation_dim = 2048;
  cfg.head_hidden_dim = 16;
  cfg.embed_dim = 8;
  cfg.n_categories = 4;
  Model m(cfg, 1);
  TapActivations t = m.forward_with_taps(random_images(2, 32, 1), true);
  CHECK(t.tap(LayerTap::Representations).rows() == 2048);
  CHECK(t.z1.rows() == 8);

  ModelConfig bad = cfg;
  bad.representation_dim = 128;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mismatched image sizes are rejected") {
  Model m(small_config(), 1);
  std::vector<FloatImage> imgs(2, FloatImage(8, 8));
  CHECK_THROWS_AS(m.forward_with_taps(imgs, false), std::invalid_argument);
}
