#include "slowsem/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>

#include "slowsem/errors.hpp"
#include "slowsem/objectives.hpp"
#include "slowsem/rng.hpp"

namespace slowsem {

const char* to_string(LabelType type) {
  switch (type) {
    case LabelType::Context: return "context";
    case LabelType::Category: return "category";
    case LabelType::Instance: return "instance";
  }
  return "?";
}

LabelType parse_label_type(const std::string& text) {
  for (LabelType t : kAllLabelTypes)
    if (text == to_string(t)) return t;
  throw ConfigError("unknown label type '" + text + "'");
}

EmbeddingBundle embed_test_set(Model& model, const CorpusManifest& corpus, const ContextAssignment& assignment,
                               int max_samples, std::uint64_t seed) {
  std::vector<int> frames;
  for (const auto& clip : corpus.clips)
    if (clip.split == Split::Test) frames.insert(frames.end(), clip.frames.begin(), clip.frames.end());
  if (frames.empty()) throw IntegrityError("test split is empty");
  std::sort(frames.begin(), frames.end());
  if (max_samples > 0 && frames.size() > static_cast<std::size_t>(max_samples)) {
    Rng rng(seed, "embed-test-set");
    rng.shuffle(std::span<int>(frames));
    frames.resize(static_cast<std::size_t>(max_samples));
    std::sort(frames.begin(), frames.end());
  }

  EmbeddingBundle bundle;
  const int size = model.config().image_size;
  const std::size_t batch = 128;
  std::array<std::vector<Matrix>, kNumTaps> parts;
  for (std::size_t start = 0; start < frames.size(); start += batch) {
    const std::size_t end = std::min(frames.size(), start + batch);
    std::vector<FloatImage> images;
    for (std::size_t i = start; i < end; ++i) {
      FloatImage img = to_float(corpus.image(frames[i]));
      if (img.width != size || img.height != size) {
        CropWindow full{0.0, 0.0, static_cast<double>(img.width), static_cast<double>(img.height), 1.0};
        img = crop_resize(img, full, size);
      }
      images.push_back(std::move(img));
    }
    TapActivations act = model.forward_with_taps(images, false);
    for (std::size_t t = 0; t < kNumTaps; ++t) parts[t].push_back(std::move(act.taps[t]));
  }
  for (std::size_t t = 0; t < kNumTaps; ++t) {
    Eigen::Index cols = 0;
    for (const auto& p : parts[t]) cols += p.cols();
    bundle.taps[t].resize(parts[t].front().rows(), cols);
    Eigen::Index at = 0;
    for (const auto& p : parts[t]) {
      bundle.taps[t].middleCols(at, p.cols()) = p;
      at += p.cols();
    }
  }
  for (int fid : frames) {
    const Frame& fr = corpus.frames.at(static_cast<std::size_t>(fid));
    bundle.frame_id.push_back(fid);
    bundle.instance.push_back(fr.instance_id);
    bundle.category.push_back(fr.category);
    bundle.context.push_back(assignment.context_of.at(static_cast<std::size_t>(fr.category)));
  }
  return bundle;
}

const std::vector<int>& labels_of(const EmbeddingBundle& bundle, LabelType type) {
  switch (type) {
    case LabelType::Context: return bundle.context;
    case LabelType::Category: return bundle.category;
    case LabelType::Instance: return bundle.instance;
  }
  throw std::invalid_argument("labels_of: bad label type");
}

double ooo_accuracy(const Matrix& embeddings, const std::vector<int>& labels,
                    const std::vector<int>& exclusion_labels, const TripletTask& task) {
  const auto n = static_cast<std::size_t>(embeddings.cols());
  if (labels.size() != n) throw std::invalid_argument("ooo_accuracy: label count differs from sample count");
  const bool exclude = task.exclusion != LabelExclusion::None;
  if (exclude && exclusion_labels.size() != n)
    throw std::invalid_argument("ooo_accuracy: exclusion labels missing");
  if (task.n_triplets < 1) throw std::invalid_argument("ooo_accuracy: n_triplets must be >= 1");
  const std::string label_name = to_string(task.label_type);

  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[labels[i]].push_back(i);
  auto valid_same = [&](std::size_t a, std::size_t s) {
    return s != a && (!exclude || exclusion_labels[s] != exclusion_labels[a]);
  };
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& g = groups[labels[i]];
    if (g.size() == n) continue;  // no different-label sample
    bool has_same = false;
    for (std::size_t s : g)
      if (valid_same(i, s)) {
        has_same = true;
        break;
      }
    if (has_same) eligible.push_back(i);
  }
  if (eligible.empty())
    throw ConfigError("odd-one-out on label '" + label_name +
                      "': no sample has both a same-label partner and a different-label sample");

  Matrix unit = embeddings;
  for (Eigen::Index k = 0; k < unit.cols(); ++k) {
    const double norm = unit.col(k).norm();
    if (norm == 0.0)
      unit.col(k).setZero();
    else
      unit.col(k) /= norm;
  }
  auto cosine = [&](std::size_t a, std::size_t b) {
    return unit.col(static_cast<Eigen::Index>(a)).dot(unit.col(static_cast<Eigen::Index>(b)));
  };

  std::size_t successes = 0;
  for (int t = 0; t < task.n_triplets; ++t) {
    Rng rng(task.seed, "ooo-" + label_name, static_cast<std::uint64_t>(t));
    const std::size_t a = eligible[static_cast<std::size_t>(rng.below(eligible.size()))];
    const auto& group = groups[labels[a]];
    std::size_t s;
    do {
      s = group[static_cast<std::size_t>(rng.below(group.size()))];
    } while (!valid_same(a, s));
    std::size_t d;
    do {
      d = static_cast<std::size_t>(rng.below(n));
    } while (labels[d] == labels[a]);
    const double c_as = cosine(a, s), c_ad = cosine(a, d), c_sd = cosine(s, d);
    if (c_as > c_ad && c_as > c_sd) ++successes;
  }
  return static_cast<double>(successes) / task.n_triplets;
}

double ooo_accuracy(const EmbeddingBundle& bundle, LayerTap tap, const TripletTask& task) {
  static const std::vector<int> none;
  const std::vector<int>* excl = &none;
  if (task.exclusion == LabelExclusion::Instance) excl = &bundle.instance;
  if (task.exclusion == LabelExclusion::Category) excl = &bundle.category;
  return ooo_accuracy(bundle.tap(tap), labels_of(bundle, task.label_type), *excl, task);
}

double sparsity(const Matrix& activations) {
  if (activations.size() == 0) return 0.0;
  const double zeros = static_cast<double>((activations.array() == 0.0).count());
  return 100.0 * zeros / static_cast<double>(activations.size());
}

double sparsity(const EmbeddingBundle& bundle, LayerTap tap) { return sparsity(bundle.tap(tap)); }

Matrix project_2d(const Matrix& embeddings) {
  const Eigen::Index d = embeddings.rows(), n = embeddings.cols();
  if (n < 3) throw std::invalid_argument("project_2d: need at least 3 samples");
  const Vector mean = embeddings.rowwise().mean();
  const Matrix centered = embeddings.colwise() - mean;

  Matrix directions(d, 2);
  double top = 0.0;
  if (d <= n) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(centered * centered.transpose());
    const Eigen::Index k = es.eigenvalues().size();
    top = es.eigenvalues()(k - 1);
    directions.col(0) = es.eigenvectors().col(k - 1);
    directions.col(1) = k >= 2 ? Vector(es.eigenvectors().col(k - 2)) : Vector::Zero(d);
    if (k >= 2 && es.eigenvalues()(k - 2) <= 1e-12 * std::max(top, 1e-300)) directions.col(1).setZero();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> es(centered.transpose() * centered);
    const Eigen::Index k = es.eigenvalues().size();
    top = es.eigenvalues()(k - 1);
    for (int c = 0; c < 2; ++c) {
      const double lambda = es.eigenvalues()(k - 1 - c);
      if (lambda <= 1e-12 * std::max(top, 1e-300)) {
        directions.col(c).setZero();
        continue;
      }
      directions.col(c) = centered * es.eigenvectors().col(k - 1 - c) / std::sqrt(lambda);
    }
  }
  if (!(top > 1e-24)) throw std::invalid_argument("project_2d: embeddings have zero variance");
  for (int c = 0; c < 2; ++c) {
    const double scale = directions.col(c).cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < d; ++i)
      if (std::abs(directions(i, c)) > 1e-9 * scale) {
        if (directions(i, c) < 0.0) directions.col(c) *= -1.0;
        break;
      }
  }
  return directions.transpose() * centered;
}

EvalReport full_report(Model& model, const CorpusManifest& corpus, const ContextAssignment& assignment,
                       const EvalConfig& config, std::map<std::string, std::string> metadata) {
  EvalReport report;
  report.metadata = std::move(metadata);
  report.metadata["seed_eval"] = std::to_string(config.seed);
  report.metadata["n_triplets"] = std::to_string(config.n_triplets);
  report.metadata["same_label_exclusion"] = to_string(config.exclusion);
  report.bundle = embed_test_set(model, corpus, assignment, config.max_samples, config.seed);
  report.metadata["n_samples"] = std::to_string(report.bundle.size());
  for (LayerTap tap : kAllTaps) {
    for (LabelType type : kAllLabelTypes) {
      TripletTask task{type, config.n_triplets, config.seed,
                       type == LabelType::Instance ? LabelExclusion::None : config.exclusion};
      if (type == LabelType::Category && task.exclusion == LabelExclusion::Category)
        task.exclusion = LabelExclusion::Instance;
      report.ooo[{tap, type}] = ooo_accuracy(report.bundle, tap, task);
    }
    report.sparsity[tap] = sparsity(report.bundle, tap);
    try {
      report.projections[tap] = project_2d(report.bundle.tap(tap));
    } catch (const std::invalid_argument&) {
      report.projections[tap] = Matrix::Zero(2, static_cast<Eigen::Index>(report.bundle.size()));
    }
  }
  return report;
}

std::string format_report(const EvalReport& report) {
  std::ostringstream out;
  char buf[128];
  out << "[metadata]\n";
  for (const auto& [k, v] : report.metadata) out << k << " = " << v << '\n';
  out << "[ooo]\n";
  for (LayerTap tap : kAllTaps)
    for (LabelType type : kAllLabelTypes) {
      auto it = report.ooo.find({tap, type});
      if (it == report.ooo.end()) continue;
      std::snprintf(buf, sizeof buf, "%s.%s = %.6f\n", to_string(tap), to_string(type), it->second);
      out << buf;
    }
  out << "[sparsity]\n";
  for (LayerTap tap : kAllTaps) {
    auto it = report.sparsity.find(tap);
    if (it == report.sparsity.end()) continue;
    std::snprintf(buf, sizeof buf, "%s = %.6f\n", to_string(tap), it->second);
    out << buf;
  }
  return out.str();
}

EvalReport parse_report(const std::string& text) {
  EvalReport report;
  std::istringstream in(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.front() == '[') {
      section = line;
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", line_no);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
    if (section == "[metadata]") {
      report.metadata[key] = value;
    } else if (section == "[ooo]") {
      const auto dot = key.find('.');
      if (dot == std::string::npos) throw ParseError("expected '<tap>.<label>'", line_no);
      report.ooo[{parse_layer_tap(key.substr(0, dot)), parse_label_type(key.substr(dot + 1))}] = std::stod(value);
    } else if (section == "[sparsity]") {
      report.sparsity[parse_layer_tap(key)] = std::stod(value);
    } else {
      throw ParseError("entry outside a known section", line_no);
    }
  }
  return report;
}

void write_report(const std::filesystem::path& dir, const EvalReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "report.txt", std::ios::binary);
    if (!out) throw IntegrityError("cannot write report in " + dir.string());
    out << format_report(report);
  }
  char buf[160];
  for (const auto& [tap, coords] : report.projections) {
    std::ofstream out(dir / (std::string("projection_") + to_string(tap) + ".csv"), std::ios::binary);
    out << "index,x,y,instance,category,context\n";
    for (Eigen::Index i = 0; i < coords.cols(); ++i) {
      const auto k = static_cast<std::size_t>(i);
      std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%d,%d,%d\n", static_cast<long long>(i), coords(0, i),
                    coords(1, i), report.bundle.instance.at(k), report.bundle.category.at(k),
                    report.bundle.context.at(k));
      out << buf;
    }
  }
}

EvalReport read_report(const std::filesystem::path& dir) {
  std::ifstream in(dir / "report.txt");
  if (!in) throw IntegrityError("missing report.txt in " + dir.string());
  std::stringstream ss;
  ss << in.rdbuf();
  EvalReport report = parse_report(ss.str());
  for (LayerTap tap : kAllTaps) {
    std::ifstream pin(dir / (std::string("projection_") + to_string(tap) + ".csv"));
    if (!pin) continue;
    std::string line;
    std::getline(pin, line);
    std::vector<std::array<double, 2>> pts;
    std::vector<int> inst, cat, ctx;
    while (std::getline(pin, line)) {
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::string f;
      std::vector<std::string> fields;
      while (std::getline(ls, f, ',')) fields.push_back(f);
      if (fields.size() != 6) throw IntegrityError("bad projection row in " + dir.string());
      pts.push_back({std::stod(fields[1]), std::stod(fields[2])});
      inst.push_back(std::stoi(fields[3]));
      cat.push_back(std::stoi(fields[4]));
      ctx.push_back(std::stoi(fields[5]));
    }
    Matrix coords(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      coords(0, static_cast<Eigen::Index>(i)) = pts[i][0];
      coords(1, static_cast<Eigen::Index>(i)) = pts[i][1];
    }
    report.projections[tap] = coords;
    if (report.bundle.instance.empty()) {
      report.bundle.instance = inst;
      report.bundle.category = cat;
      report.bundle.context = ctx;
    }
  }
  return report;
}

}  // namespace slowsem
