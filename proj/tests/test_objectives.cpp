#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slowsem/errors.hpp"
#include "slowsem/objectives.hpp"
#include "slowsem/optimizer.hpp"
#include "slowsem/rng.hpp"

using namespace slowsem;

namespace {

Matrix random_matrix(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

double relative_diff(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("cosine similarity basics") {
  Vector v(3);
  v << 0.3, -2.0, 5.0;
  CHECK(cosine_similarity(v, v) == doctest::Approx(1.0));
  Vector a(2), b(2), c(2);
  a << 1, 0;
  b << 0, 1;
  c << 1, 1;
  CHECK(cosine_similarity(a, b) == 0.0);
  CHECK(cosine_similarity(c, a) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("zero vectors give cosine 0 and are counted") {
  reset_zero_norm_events();
  Vector z = Vector::Zero(3), v = Vector::Ones(3);
  CHECK(cosine_similarity(z, v) == 0.0);
  CHECK(zero_norm_events() == 1);
  Matrix anchors = Matrix::Ones(3, 2), partners = Matrix::Ones(3, 2);
  anchors.col(0).setZero();
  CHECK(std::isfinite(loss_ssltt(anchors, partners, 0.5)));
  CHECK(zero_norm_events() > 1);
}

TEST_CASE("orthogonal pairs, tau 1: every term is -log(e / (e + 2))") {
  Matrix a(2, 2);
  a << 1, 0, 0, 1;
  const double expected = -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0));
  auto r = contrastive_loss(a, a, 1.0);
  REQUIRE(r.per_term.size() == 4);
  for (double t : r.per_term) CHECK(t == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss_ssltt(a, a, 1.0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(loss_vla(a, a, 1.0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("identical embeddings give log(2n - 1)") {
  for (int n : {2, 5, 8}) {
    Matrix a = Matrix::Constant(4, n, 0.7);
    CHECK(loss_ssltt(a, a, 0.5) == doctest::Approx(std::log(2.0 * n - 1.0)).epsilon(1e-12));
    CHECK(loss_vla(a, a, 0.1) == doctest::Approx(std::log(2.0 * n - 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("vectorized losses match the scalar oracle on 50 random batches") {
  Rng rng(42);
  for (int b = 0; b < 50; ++b) {
    Matrix a = random_matrix(16, 8, rng), p = random_matrix(16, 8, rng);
    CHECK(relative_diff(loss_ssltt(a, p, 0.5), oracle::pair_loss(a, p, 0.5)) < 1e-6);
    CHECK(relative_diff(loss_vla(a, p, 0.1), oracle::pair_loss(a, p, 0.1)) < 1e-6);
  }
}

TEST_CASE("duplicated category rows keep the alignment loss finite") {
  Rng rng(1);
  Matrix z2 = random_matrix(6, 4, rng);
  Matrix z3 = random_matrix(6, 4, rng);
  z3.col(2) = z3.col(0);
  const double l = loss_vla(z2, z3, 0.1);
  CHECK(std::isfinite(l));
  CHECK(relative_diff(l, oracle::pair_loss(z2, z3, 0.1)) < 1e-9);
}

TEST_CASE("losses are invariant to positive column scaling and pair permutation") {
  Rng rng(3);
  Matrix a = random_matrix(10, 6, rng), p = random_matrix(10, 6, rng);
  const double base = loss_ssltt(a, p, 0.5);
  Matrix as = a, ps = p;
  for (int i = 0; i < 6; ++i) {
    as.col(i) *= rng.uniform(0.1, 10.0);
    ps.col(i) *= rng.uniform(0.1, 10.0);
  }
  CHECK(relative_diff(loss_ssltt(as, ps, 0.5), base) < 1e-6);
  CHECK(relative_diff(loss_vla(as, ps, 0.1), loss_vla(a, p, 0.1)) < 1e-6);

  std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  Matrix ap(10, 6), pp(10, 6);
  for (int i = 0; i < 6; ++i) {
    ap.col(i) = a.col(perm[i]);
    pp.col(i) = p.col(perm[i]);
  }
  CHECK(relative_diff(loss_ssltt(ap, pp, 0.5), base) < 1e-12);
}

TEST_CASE("per-term loss is positive and decreases as the positive aligns") {
  Rng rng(5);
  Matrix a = random_matrix(8, 4, rng), p = random_matrix(8, 4, rng);
  auto r = contrastive_loss(a, p, 0.5);
  for (double t : r.per_term) CHECK(t > 0.0);

  // Move partner 0 toward anchor 0; the other vectors stay fixed.
  double previous = contrastive_loss(a, p, 0.5).per_term[0];
  for (double w : {0.25, 0.5, 0.75, 1.0}) {
    Matrix moved = p;
    moved.col(0) = (1.0 - w) * p.col(0).normalized() + w * a.col(0).normalized();
    const double now = contrastive_loss(a, moved, 0.5).per_term[0];
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("large temperature uniformizes the softmax") {
  Rng rng(8);
  Matrix a = random_matrix(5, 4, rng), p = random_matrix(5, 4, rng);
  auto r = contrastive_loss(a, p, 1e4);
  for (double t : r.per_term) CHECK(std::abs(t - std::log(7.0)) < 1e-3);
}

TEST_CASE("analytic gradient of the contrastive loss matches central differences") {
  Rng rng(9);
  Matrix a = random_matrix(5, 4, rng), p = random_matrix(5, 4, rng);
  auto r = contrastive_loss(a, p, 0.3, true);
  const double h = 1e-5;
  for (int which = 0; which < 2; ++which) {
    Matrix& m = which == 0 ? a : p;
    const Matrix& g = which == 0 ? r.grad_anchors : r.grad_partners;
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      const double saved = m.data()[k];
      m.data()[k] = saved + h;
      const double up = oracle::pair_loss(a, p, 0.3);
      m.data()[k] = saved - h;
      const double down = oracle::pair_loss(a, p, 0.3);
      m.data()[k] = saved;
      const double numeric = (up - down) / (2 * h);
      CHECK(std::abs(numeric - g.data()[k]) <= 1e-6 * std::max(1.0, std::abs(numeric)));
    }
  }
}

TEST_CASE("total loss sums the enabled terms") {
  CHECK(total_loss(0.7, 0.3) == doctest::Approx(1.0));
  CHECK(total_loss(0.7, 0.3, LossMode::SSLTT) == 0.7);
  CHECK(total_loss(0.7, 0.3, LossMode::VLA) == 0.3);
  CHECK_THROWS_AS(total_loss(std::nan(""), 0.3), NumericalError);
  CHECK_THROWS_AS(total_loss(0.1, INFINITY), NumericalError);
  CHECK(parse_loss_mode("ssltt") == LossMode::SSLTT);
  CHECK(parse_loss_mode("both") == LossMode::Both);
  CHECK_THROWS_AS(parse_loss_mode("simclr"), ConfigError);
}

TEST_CASE("identity crop reproduces the image") {
  Rng rng(1);
  FloatImage img(12, 12);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<double>(i % 97) / 97.0;
  FloatImage out = augment_crop_resize(img, rng, 12, 1.0);
  REQUIRE(out.width == 12);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
}

TEST_CASE("crop area fraction is uniform on [0.5, 1]") {
  Rng rng(2);
  std::vector<int> bins(5, 0);
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    CropWindow w = sample_crop(32, 32, rng, 0.5);
    REQUIRE(w.area_fraction >= 0.5);
    REQUIRE(w.area_fraction <= 1.0);
    CHECK(w.width * w.height / (32.0 * 32.0) == doctest::Approx(w.area_fraction));
    CHECK(w.x0 >= 0.0);
    CHECK(w.x0 + w.width <= 32.0 + 1e-9);
    ++bins[std::min(4, static_cast<int>((w.area_fraction - 0.5) / 0.1))];
  }
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - n / 5.0) * (b - n / 5.0) / (n / 5.0);
  CHECK(oracle::chi_square_p_value(chi2, 4) > 0.01);
}

TEST_CASE("augmented output always has the requested size") {
  Rng rng(3);
  FloatImage img(32, 32);
  for (int i = 0; i < 20; ++i) {
    FloatImage out = augment_crop_resize(img, rng, 24, 0.5);
    CHECK(out.width == 24);
    CHECK(out.height == 24);
    CHECK(out.data.size() == 24u * 24u * 3u);
  }
}

TEST_CASE("AdamW step matches a hand-computed update") {
  Matrix w(1, 2), g(1, 2);
  w << 1.0, -2.0;
  g << 0.5, -0.25;
  ParamSet set;
  set.params.push_back({"w", &w, &g});
  AdamWConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.weight_decay = 0.01;
  AdamW opt(set, cfg);
  opt.step();
  // Step 1: m_hat = g, v_hat = g^2, so the Adam update is lr * g / (|g| + eps).
  const double w0 = 1.0 * (1 - 0.1 * 0.01) - 0.1 * 0.5 / (0.5 + 1e-8);
  const double w1 = -2.0 * (1 - 0.1 * 0.01) - 0.1 * -0.25 / (0.25 + 1e-8);
  CHECK(w(0, 0) == doctest::Approx(w0).epsilon(1e-12));
  CHECK(w(0, 1) == doctest::Approx(w1).epsilon(1e-12));
  CHECK(opt.steps_taken() == 1);
}

TEST_CASE("AdamW leaves inactive parameter groups untouched") {
  Matrix a = Matrix::Ones(2, 2), ga = Matrix::Ones(2, 2);
  Matrix b = Matrix::Ones(2, 2), gb = Matrix::Ones(2, 2);
  ParamSet set;
  set.params.push_back({"f.w", &a, &ga});
  set.params.push_back({"h2.w", &b, &gb});
  AdamW opt(set, {});
  opt.step({"f"});
  CHECK(a(0, 0) < 1.0);
  CHECK(b == Matrix::Ones(2, 2));
}
