#include "slowsem/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "slowsem/errors.hpp"
#include "slowsem/optimizer.hpp"

namespace slowsem {

namespace {

constexpr char kMagic[12] = {'S', 'L', 'O', 'W', 'S', 'E', 'M', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) throw IntegrityError("truncated checkpoint");
  return v;
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
  const auto n = get<std::uint64_t>(in);
  if (n > (1ull << 32)) throw IntegrityError("corrupt checkpoint string length");
  std::string s(n, '\0');
  if (!in.read(s.data(), static_cast<std::streamsize>(n))) throw IntegrityError("truncated checkpoint");
  return s;
}

}  // namespace

std::string format_model_config(const ModelConfig& c) {
  std::ostringstream out;
  out << "image_size=" << c.image_size << '\n'
      << "encoder=" << to_string(c.encoder_kind) << '\n'
      << "representation_dim=" << c.representation_dim << '\n'
      << "head_hidden_dim=" << c.head_hidden_dim << '\n'
      << "embed_dim=" << c.embed_dim << '\n'
      << "n_categories=" << c.n_categories << '\n'
      << "conv_blocks=" << c.conv_blocks << '\n';
  return out.str();
}

ModelConfig parse_model_config(const std::string& text) {
  ModelConfig c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "image_size") c.image_size = std::stoi(v);
    else if (k == "encoder") c.encoder_kind = parse_encoder_kind(v);
    else if (k == "representation_dim") c.representation_dim = std::stoi(v);
    else if (k == "head_hidden_dim") c.head_hidden_dim = std::stoi(v);
    else if (k == "embed_dim") c.embed_dim = std::stoi(v);
    else if (k == "n_categories") c.n_categories = std::stoi(v);
    else if (k == "conv_blocks") c.conv_blocks = std::stoi(v);
    else throw IntegrityError("unknown model config key in checkpoint: " + k);
  }
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IntegrityError("cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put_string(out, ck.run_config);
    put_string(out, ck.train_signature);
    put_string(out, format_model_config(ck.model));
    put<std::int64_t>(out, ck.step);
    put<std::int64_t>(out, ck.optimizer_steps);
    put<std::uint64_t>(out, ck.arrays.size());
    for (const auto& [name, m] : ck.arrays) {
      put_string(out, name);
      put<std::int64_t>(out, m.rows());
      put<std::int64_t>(out, m.cols());
      out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!out) throw IntegrityError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open checkpoint " + path.string());
  char magic[sizeof kMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
    throw IntegrityError("not a checkpoint file: " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion)
    throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  ck.run_config = get_string(in);
  ck.train_signature = get_string(in);
  ck.model = parse_model_config(get_string(in));
  ck.step = get<std::int64_t>(in);
  ck.optimizer_steps = get<std::int64_t>(in);
  const auto n = get<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string name = get_string(in);
    const auto rows = get<std::int64_t>(in), cols = get<std::int64_t>(in);
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 31)) throw IntegrityError("corrupt array shape in checkpoint");
    Matrix m(rows, cols);
    if (!in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw IntegrityError("truncated checkpoint");
    ck.arrays.emplace(std::move(name), std::move(m));
  }
  return ck;
}

Checkpoint capture_checkpoint(Model& model, AdamW* optimizer, std::int64_t step) {
  Checkpoint ck;
  ck.model = model.config();
  ck.step = step;
  ParamSet ps = model.parameters();
  for (const auto& p : ps.params) ck.arrays[p.name] = *p.value;
  for (const auto& b : ps.buffers) ck.arrays[b.name] = *b.value;
  if (optimizer) {
    ck.optimizer_steps = optimizer->steps_taken();
    for (const auto& b : optimizer->state()) ck.arrays[b.name] = *b.value;
  }
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, Model& model, AdamW* optimizer) {
  auto load = [&](const std::string& name, Matrix* dst) {
    auto it = ck.arrays.find(name);
    if (it == ck.arrays.end()) throw IntegrityError("checkpoint lacks array " + name);
    if (it->second.rows() != dst->rows() || it->second.cols() != dst->cols())
      throw IntegrityError("checkpoint array " + name + " has the wrong shape");
    *dst = it->second;
  };
  ParamSet ps = model.parameters();
  for (const auto& p : ps.params) load(p.name, p.value);
  for (const auto& b : ps.buffers) load(b.name, b.value);
  if (optimizer) {
    for (const auto& b : optimizer->state()) load(b.name, b.value);
    optimizer->set_steps_taken(ck.optimizer_steps);
  }
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& checkpoint) {
  auto model = std::make_unique<Model>(checkpoint.model, 0);
  restore_checkpoint(checkpoint, *model, nullptr);
  return model;
}

}  // namespace slowsem
