#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "slowsem/errors.hpp"
#include "slowsem/evaluator.hpp"
#include "slowsem/pipeline.hpp"
#include "test_support.hpp"

using namespace slowsem;

namespace {

Matrix random_unit_columns(int dim, int n, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(dim, n);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  for (int j = 0; j < n; ++j) m.col(j).normalize();
  return m;
}

std::vector<int> cyclic_labels(int n, int k) {
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = i % k;
  return labels;
}

TripletTask task(LabelType type, int n, std::uint64_t seed = 1) {
  TripletTask t;
  t.label_type = type;
  t.n_triplets = n;
  t.seed = seed;
  return t;
}

struct TrainedFixture {
  RunConfig config = testing::tiny_config();
  PreparedCorpus corpus = prepare_corpus(config);
  std::unique_ptr<Model> model;
  TrainedFixture() {
    PreparedSequence seq = prepare_sequence(corpus, config.sequence);
    TrainConfig t = config.train;
    t.max_steps = 3;
    model = model_from_checkpoint(
        train(corpus.manifest, seq.sequence, resolved_model_config(config, corpus), t).checkpoint);
  }
};

}  // namespace

TEST_CASE("random unit embeddings score at chance for every label type") {
  const Matrix e = random_unit_columns(32, 600, 5);
  for (int k : {8, 16, 100}) {
    const double acc = ooo_accuracy(e, cyclic_labels(600, k), {}, task(LabelType::Context, 10000));
    CAPTURE(k);
    CHECK(std::abs(acc - 1.0 / 3.0) <= 0.02);
  }
}

TEST_CASE("one-hot label codes score exactly 1") {
  const int n = 64, k = 8;
  const auto labels = cyclic_labels(n, k);
  Matrix e = Matrix::Zero(k, n);
  for (int i = 0; i < n; ++i) e(labels[static_cast<std::size_t>(i)], i) = 1.0;
  CHECK(ooo_accuracy(e, labels, {}, task(LabelType::Context, 2000)) == 1.0);
}

TEST_CASE("identical embeddings score exactly 0 under the strict tie rule") {
  const Matrix e = Matrix::Constant(4, 30, 0.5);
  CHECK(ooo_accuracy(e, cyclic_labels(30, 3), {}, task(LabelType::Category, 1000)) == 0.0);
}

TEST_CASE("sampled accuracy matches the exact population accuracy") {
  // With equal class sizes every (anchor, same, different) triplet is equally
  // likely, so the expectation is the plain mean over all of them.
  const Matrix e = random_unit_columns(6, 40, 2);
  const auto labels = cyclic_labels(40, 4);
  double population = 0.0;
  std::size_t count = 0;
  for (int a = 0; a < 40; ++a)
    for (int s = 0; s < 40; ++s) {
      if (s == a || labels[s] != labels[a]) continue;
      std::vector<std::array<int, 3>> all;
      for (int d = 0; d < 40; ++d)
        if (labels[d] != labels[a]) all.push_back({a, s, d});
      population += oracle::triplet_accuracy(e, all) * static_cast<double>(all.size());
      count += all.size();
    }
  population /= static_cast<double>(count);
  const double estimate = ooo_accuracy(e, labels, {}, task(LabelType::Instance, 20000, 3));
  CHECK(std::abs(estimate - population) < 0.015);
}

TEST_CASE("accuracy is invariant to column rescaling and label renaming") {
  const Matrix e = random_unit_columns(8, 200, 9);
  const auto labels = cyclic_labels(200, 5);
  const auto t = task(LabelType::Context, 3000, 4);
  const double base = ooo_accuracy(e, labels, {}, t);
  Matrix scaled = e;
  Rng rng(1);
  for (int j = 0; j < 200; ++j) scaled.col(j) *= rng.uniform(0.1, 5.0);
  CHECK(ooo_accuracy(scaled, labels, {}, t) == base);
  std::vector<int> renamed = labels;
  for (auto& l : renamed) l = (l * 3 + 2) % 5;
  CHECK(ooo_accuracy(e, renamed, {}, t) == base);
}

TEST_CASE("unsatisfiable sampling names the label") {
  const Matrix e = random_unit_columns(4, 6, 1);
  try {
    ooo_accuracy(e, {0, 1, 2, 3, 4, 5}, {}, task(LabelType::Instance, 10));
    FAIL("expected a config error");
  } catch (const ConfigError& err) {
    CHECK(std::string(err.what()).find("instance") != std::string::npos);
  }
  CHECK_THROWS_AS(ooo_accuracy(e, std::vector<int>(6, 0), {}, task(LabelType::Context, 10)), ConfigError);
}

TEST_CASE("exclusion labels force the same-label partner to differ") {
  // Context 0 holds categories 0 and 1; embeddings encode only the category.
  // Without exclusion the same-category partner makes triplets easy; with
  // category exclusion every same-context partner has the other category.
  const int n = 80;
  std::vector<int> category(n), context(n);
  Matrix e = Matrix::Zero(4, n);
  for (int i = 0; i < n; ++i) {
    category[static_cast<std::size_t>(i)] = i % 4;
    context[static_cast<std::size_t>(i)] = (i % 4) / 2;
    e(i % 4, i) = 1.0;
  }
  TripletTask t = task(LabelType::Context, 4000);
  const double plain = ooo_accuracy(e, context, {}, t);
  t.exclusion = LabelExclusion::Category;
  const double excluded = ooo_accuracy(e, context, category, t);
  CHECK(plain > 0.4);
  CHECK(excluded == 0.0);
}

TEST_CASE("sparsity counts exact zeros") {
  CHECK(sparsity(Matrix::Zero(10, 4)) == 100.0);
  CHECK(sparsity(Matrix::Constant(10, 4, 0.1)) == 0.0);
  Matrix half = Matrix::Ones(10, 3);
  half.topRows(5).setZero();
  CHECK(sparsity(half) == 50.0);
  Matrix mixed(2, 2);
  mixed << 0, 1, 0, 0;
  CHECK(sparsity(mixed) == doctest::Approx(75.0));
}

TEST_CASE("projection of planar data preserves pairwise distances") {
  Rng rng(4);
  const int d = 7, n = 30;
  Matrix basis = random_unit_columns(d, 2, 3);
  basis.col(1) -= basis.col(0).dot(basis.col(1)) * basis.col(0);
  basis.col(1).normalize();
  Matrix pts(d, n);
  for (int j = 0; j < n; ++j) pts.col(j) = basis.col(0) * rng.normal() * 3.0 + basis.col(1) * rng.normal();
  pts.colwise() += Vector::Constant(d, 2.5);
  const Matrix p = project_2d(pts);
  REQUIRE(p.rows() == 2);
  REQUIRE(p.cols() == n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(std::abs((p.col(i) - p.col(j)).norm() - (pts.col(i) - pts.col(j)).norm()) < 1e-6);
  CHECK(project_2d(pts) == p);
}

TEST_CASE("projection rejects degenerate input") {
  CHECK_THROWS_AS(project_2d(Matrix::Ones(3, 2)), std::invalid_argument);
  CHECK_THROWS_AS(project_2d(Matrix::Ones(3, 10)), std::invalid_argument);
}

TEST_CASE("test-set embedding is clamped, consistent across taps and deterministic") {
  TrainedFixture f;
  const EmbeddingBundle a = embed_test_set(*f.model, f.corpus.manifest, f.corpus.assignment, 100000, 1);
  std::size_t n_test = 0;
  for (const auto& clip : f.corpus.manifest.clips)
    if (clip.split == Split::Test) n_test += clip.frames.size();
  CHECK(a.size() == n_test);
  for (LayerTap tap : kAllTaps) CHECK(a.tap(tap).cols() == static_cast<Eigen::Index>(n_test));
  const EmbeddingBundle b = embed_test_set(*f.model, f.corpus.manifest, f.corpus.assignment, 100000, 1);
  CHECK(a == b);
  const EmbeddingBundle small = embed_test_set(*f.model, f.corpus.manifest, f.corpus.assignment, 10, 1);
  CHECK(small.size() == 10);
  CHECK(std::is_sorted(small.frame_id.begin(), small.frame_id.end()));
}

TEST_CASE("an empty test split is an error") {
  TrainedFixture f;
  CorpusManifest m = f.corpus.manifest;
  for (auto& clip : m.clips) clip.split = Split::Train;
  CHECK_THROWS(embed_test_set(*f.model, m, f.corpus.assignment, 100, 1));
}

TEST_CASE("full report has 15 accuracies and 5 sparsities and round-trips") {
  TrainedFixture f;
  EvalReport r = full_report(*f.model, f.corpus.manifest, f.corpus.assignment, f.config.eval, {{"p_c", "0.1"}});
  CHECK(r.ooo.size() == 15);
  CHECK(r.sparsity.size() == 5);
  CHECK(r.projections.size() == 5);
  for (const auto& [key, acc] : r.ooo) {
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }
  for (const auto& [tap, s] : r.sparsity) {
    CHECK(s >= 0.0);
    CHECK(s <= 100.0);
  }
  EvalReport again = full_report(*f.model, f.corpus.manifest, f.corpus.assignment, f.config.eval, {{"p_c", "0.1"}});
  CHECK(format_report(r) == format_report(again));

  testing::TempDir dir("report");
  write_report(dir.path(), r);
  EvalReport loaded = read_report(dir.path());
  CHECK(format_report(loaded) == format_report(r));
  CHECK(loaded.bundle.context == r.bundle.context);
  for (LayerTap tap : kAllTaps) CHECK((loaded.projections.at(tap) - r.projections.at(tap)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("report parsing rejects malformed input") {
  CHECK_THROWS_AS(parse_report("[ooo]\nNotATap.context = 0.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_report("[ooo]\nSSLTT1.context 0.5\n"), ConfigError);
}
