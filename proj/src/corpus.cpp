#include "slowsem/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "slowsem/errors.hpp"
#include "slowsem/rng.hpp"

namespace slowsem {

namespace {

constexpr const char* kManifestHeader =
    "clip_id,instance_id,category_name,frame_index,relative_image_path,split";

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

int parse_int_field(const std::string& text, const char* what, std::size_t line) {
  try {
    std::size_t used = 0;
    int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + text + "'", line);
  }
}

}  // namespace

const char* to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ConfigError("unknown split '" + text + "'");
}

const char* to_string(AssignmentMode mode) {
  return mode == AssignmentMode::Fixed ? "fixed" : "shuffled";
}

AssignmentMode parse_assignment_mode(const std::string& text) {
  if (text == "fixed") return AssignmentMode::Fixed;
  if (text == "shuffled") return AssignmentMode::Shuffled;
  throw ConfigError("unknown assignment mode '" + text + "'");
}

int CorpusManifest::category_index(const std::string& name) const {
  for (const auto& c : categories)
    if (c.name == name) return c.id;
  return -1;
}

void CorpusManifest::validate() const {
  std::set<std::string> names;
  for (std::size_t k = 0; k < categories.size(); ++k) {
    if (categories[k].id != static_cast<int>(k))
      throw IntegrityError("category ids are not dense at " + categories[k].name);
    if (!names.insert(categories[k].name).second)
      throw IntegrityError("duplicate category name " + categories[k].name);
  }
  for (std::size_t f = 0; f < frames.size(); ++f)
    if (frames[f].frame_id != static_cast<int>(f)) throw IntegrityError("frame ids are not dense");
  if (images.size() != frames.size())
    throw IntegrityError("image store holds " + std::to_string(images.size()) + " images for " +
                         std::to_string(frames.size()) + " frames");
  for (const auto& img : images)
    if (img.width != image_width() || img.height != image_height())
      throw IntegrityError("image dimensions differ across frames");

  std::vector<int> referenced(frames.size(), 0);
  std::map<int, int> instance_category;
  std::set<int> clip_ids;
  for (const auto& clip : clips) {
    if (!clip_ids.insert(clip.clip_id).second)
      throw IntegrityError("duplicate clip id " + std::to_string(clip.clip_id));
    if (clip.frames.empty()) throw IntegrityError("clip " + std::to_string(clip.clip_id) + " is empty");
    if (clip.category < 0 || clip.category >= static_cast<int>(categories.size()))
      throw IntegrityError("clip " + std::to_string(clip.clip_id) + " has unknown category");
    auto [it, inserted] = instance_category.emplace(clip.instance_id, clip.category);
    if (!inserted && it->second != clip.category)
      throw IntegrityError("instance " + std::to_string(clip.instance_id) +
                           " maps to more than one category");
    int last_index = -1;
    for (int fid : clip.frames) {
      if (fid < 0 || fid >= static_cast<int>(frames.size()))
        throw IntegrityError("clip " + std::to_string(clip.clip_id) + " references missing frame " +
                             std::to_string(fid));
      const Frame& fr = frames[static_cast<std::size_t>(fid)];
      if (fr.clip_id != clip.clip_id || fr.instance_id != clip.instance_id ||
          fr.category != clip.category)
        throw IntegrityError("frame " + std::to_string(fid) + " disagrees with its clip");
      if (fr.frame_index <= last_index)
        throw IntegrityError("clip " + std::to_string(clip.clip_id) + " frames out of order");
      last_index = fr.frame_index;
      ++referenced[static_cast<std::size_t>(fid)];
    }
  }
  for (std::size_t f = 0; f < referenced.size(); ++f)
    if (referenced[f] != 1)
      throw IntegrityError("frame " + std::to_string(f) + " referenced " +
                           std::to_string(referenced[f]) + " times");
}

bool CorpusManifest::same_records(const CorpusManifest& other) const {
  return categories == other.categories && clips == other.clips && frames == other.frames &&
         images == other.images;
}

int ContextAssignment::context_index(const std::string& name) const {
  for (const auto& c : contexts)
    if (c.name == name) return c.id;
  return -1;
}

std::vector<int> ContextAssignment::categories_per_context() const {
  std::vector<int> counts(contexts.size(), 0);
  for (int c : context_of)
    if (c >= 0) ++counts[static_cast<std::size_t>(c)];
  return counts;
}

CorpusManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open manifest " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || strip_cr(line) != kManifestHeader)
    throw ParseError("manifest header must be '" + std::string(kManifestHeader) + "'", 1);

  struct Record {
    int clip_id, instance_id, frame_index;
    std::string category, path;
    Split split;
    std::size_t line;
  };
  std::vector<Record> records;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split_csv(line);
    if (fields.size() != 6)
      throw ParseError("expected 6 fields, got " + std::to_string(fields.size()), line_no);
    Record r;
    r.clip_id = parse_int_field(fields[0], "clip_id", line_no);
    r.instance_id = parse_int_field(fields[1], "instance_id", line_no);
    r.category = fields[2];
    r.frame_index = parse_int_field(fields[3], "frame_index", line_no);
    r.path = fields[4];
    if (r.category.empty()) throw ParseError("empty category_name", line_no);
    if (r.path.empty()) throw ParseError("empty relative_image_path", line_no);
    try {
      r.split = parse_split(fields[5]);
    } catch (const ConfigError&) {
      throw ParseError("bad split '" + fields[5] + "'", line_no);
    }
    r.line = line_no;
    records.push_back(std::move(r));
  }
  if (records.empty()) throw IntegrityError("manifest " + path.string() + " has no records");

  CorpusManifest m;
  m.root = path.parent_path();
  std::map<int, std::size_t> clip_slot;
  std::set<std::string> paths;
  for (const auto& r : records) {
    int cat = m.category_index(r.category);
    if (cat < 0) {
      cat = static_cast<int>(m.categories.size());
      m.categories.push_back({cat, r.category});
    }
    if (!paths.insert(r.path).second)
      throw IntegrityError("image " + r.path + " referenced twice (line " + std::to_string(r.line) + ")");
    auto [it, inserted] = clip_slot.emplace(r.clip_id, m.clips.size());
    if (inserted) {
      Clip clip;
      clip.clip_id = r.clip_id;
      clip.instance_id = r.instance_id;
      clip.category = cat;
      clip.split = r.split;
      m.clips.push_back(clip);
    }
    Clip& clip = m.clips[it->second];
    if (clip.instance_id != r.instance_id || clip.category != cat || clip.split != r.split)
      throw IntegrityError("clip " + std::to_string(r.clip_id) +
                           " mixes instances, categories or splits (line " + std::to_string(r.line) + ")");
    Frame fr;
    fr.frame_id = static_cast<int>(m.frames.size());
    fr.clip_id = r.clip_id;
    fr.frame_index = r.frame_index;
    fr.instance_id = r.instance_id;
    fr.category = cat;
    fr.path = r.path;
    clip.frames.push_back(fr.frame_id);
    m.frames.push_back(std::move(fr));
  }
  for (auto& clip : m.clips) {
    std::stable_sort(clip.frames.begin(), clip.frames.end(), [&](int a, int b) {
      return m.frames[static_cast<std::size_t>(a)].frame_index <
             m.frames[static_cast<std::size_t>(b)].frame_index;
    });
    for (std::size_t i = 1; i < clip.frames.size(); ++i)
      if (m.frames[static_cast<std::size_t>(clip.frames[i])].frame_index ==
          m.frames[static_cast<std::size_t>(clip.frames[i - 1])].frame_index)
        throw IntegrityError("clip " + std::to_string(clip.clip_id) + " repeats a frame_index");
  }
  std::sort(m.clips.begin(), m.clips.end(),
            [](const Clip& a, const Clip& b) { return a.clip_id < b.clip_id; });

  m.images.reserve(m.frames.size());
  for (const auto& fr : m.frames) m.images.push_back(read_bmp(m.root / fr.path));
  m.validate();
  return m;
}

ContextAssignment load_context_mapping(const std::filesystem::path& path,
                                       const CorpusManifest& manifest) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open context mapping " + path.string());
  ContextAssignment a;
  a.context_of.assign(manifest.categories.size(), -1);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    if (line_no == 1 && line == "category_name,context_name") continue;
    auto fields = split_csv(line);
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty())
      throw ParseError("expected 'category_name,context_name'", line_no);
    int ctx = a.context_index(fields[1]);
    if (ctx < 0) {
      ctx = a.n_contexts();
      a.contexts.push_back({ctx, fields[1]});
    }
    const int cat = manifest.category_index(fields[0]);
    if (cat < 0) continue;
    if (a.context_of[static_cast<std::size_t>(cat)] >= 0 &&
        a.context_of[static_cast<std::size_t>(cat)] != ctx)
      throw ParseError("category " + fields[0] + " mapped to two contexts", line_no);
    a.context_of[static_cast<std::size_t>(cat)] = ctx;
  }
  return a;
}

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write manifest " + path.string());
  out << kManifestHeader << '\n';
  for (const auto& clip : manifest.clips)
    for (int fid : clip.frames) {
      const Frame& fr = manifest.frames[static_cast<std::size_t>(fid)];
      out << clip.clip_id << ',' << clip.instance_id << ','
          << manifest.categories[static_cast<std::size_t>(clip.category)].name << ','
          << fr.frame_index << ',' << fr.path << ',' << to_string(clip.split) << '\n';
    }
}

void write_context_mapping(const std::filesystem::path& path, const CorpusManifest& manifest,
                           const ContextAssignment& assignment) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write context mapping " + path.string());
  for (const auto& cat : manifest.categories) {
    const int ctx = assignment.context_of.at(static_cast<std::size_t>(cat.id));
    if (ctx < 0) continue;
    out << cat.name << ',' << assignment.contexts[static_cast<std::size_t>(ctx)].name << '\n';
  }
}

void write_corpus(const std::filesystem::path& dir, const CorpusManifest& manifest,
                  const ContextAssignment& assignment) {
  namespace fs = std::filesystem;
  CorpusManifest out = manifest;
  out.root = dir;
  for (auto& fr : out.frames)
    fr.path = "images/" + std::to_string(fr.clip_id) + "/" + std::to_string(fr.frame_index) + ".bmp";
  for (const auto& clip : out.clips) fs::create_directories(dir / "images" / std::to_string(clip.clip_id));
  for (const auto& fr : out.frames)
    write_bmp(dir / fr.path, out.images[static_cast<std::size_t>(fr.frame_id)]);
  write_manifest(dir / "manifest.csv", out);
  write_context_mapping(dir / "contexts.csv", out, assignment);
}

ContextAssignment assign_contexts(const CorpusManifest& manifest, const ContextAssignment& base,
                                  AssignmentMode mode, std::uint64_t seed) {
  std::string missing;
  for (const auto& cat : manifest.categories) {
    const auto k = static_cast<std::size_t>(cat.id);
    if (k >= base.context_of.size() || base.context_of[k] < 0)
      missing += (missing.empty() ? "" : ", ") + cat.name;
  }
  if (!missing.empty()) throw ConfigError("unmapped categories: " + missing);

  ContextAssignment out = base;
  out.context_of.resize(manifest.categories.size());
  out.mode = mode;
  out.seed = mode == AssignmentMode::Shuffled ? seed : 0;
  if (mode == AssignmentMode::Shuffled) {
    Rng rng(seed, "assign-contexts");
    rng.shuffle(std::span<int>(out.context_of));
  }
  return out;
}

BalancedCorpus balance_corpus(const CorpusManifest& manifest, const ContextAssignment& assignment) {
  const int n_ctx = assignment.n_contexts();
  if (assignment.context_of.size() < manifest.categories.size())
    throw ConfigError("assignment does not cover every category");

  // Categories that actually own clips, grouped by context in id order.
  std::vector<std::vector<int>> per_context(static_cast<std::size_t>(n_ctx));
  std::vector<char> has_clips(manifest.categories.size(), 0);
  for (const auto& clip : manifest.clips) has_clips[static_cast<std::size_t>(clip.category)] = 1;
  for (const auto& cat : manifest.categories) {
    const int ctx = assignment.context_of[static_cast<std::size_t>(cat.id)];
    if (ctx < 0) throw ConfigError("category " + cat.name + " is unmapped");
    if (has_clips[static_cast<std::size_t>(cat.id)]) per_context[static_cast<std::size_t>(ctx)].push_back(cat.id);
  }
  std::size_t keep_categories = manifest.categories.size();
  for (int c = 0; c < n_ctx; ++c) {
    if (per_context[static_cast<std::size_t>(c)].empty())
      throw IntegrityError("context " + assignment.contexts[static_cast<std::size_t>(c)].name +
                           " has no categories");
    keep_categories = std::min(keep_categories, per_context[static_cast<std::size_t>(c)].size());
  }
  std::vector<char> keep_cat(manifest.categories.size(), 0);
  for (auto& cats : per_context)
    for (std::size_t i = 0; i < keep_categories; ++i) keep_cat[static_cast<std::size_t>(cats[i])] = 1;

  // Instances per (category, split), in order of first appearance.
  std::map<std::pair<int, int>, std::vector<int>> instances;
  for (const auto& clip : manifest.clips) {
    if (!keep_cat[static_cast<std::size_t>(clip.category)]) continue;
    auto& list = instances[{clip.category, static_cast<int>(clip.split)}];
    if (std::find(list.begin(), list.end(), clip.instance_id) == list.end())
      list.push_back(clip.instance_id);
  }
  std::set<int> kept_instances;
  for (int split : {static_cast<int>(Split::Train), static_cast<int>(Split::Test)}) {
    std::size_t keep_n = std::numeric_limits<std::size_t>::max();
    bool any = false;
    for (std::size_t k = 0; k < keep_cat.size(); ++k) {
      if (!keep_cat[k]) continue;
      auto it = instances.find({static_cast<int>(k), split});
      const std::size_t n = it == instances.end() ? 0 : it->second.size();
      keep_n = std::min(keep_n, n);
      any = any || n > 0;
    }
    if (!any) continue;
    for (const auto& [key, list] : instances)
      if (key.second == split)
        for (std::size_t i = 0; i < keep_n && i < list.size(); ++i) kept_instances.insert(list[i]);
  }

  BalancedCorpus out;
  out.manifest.root = manifest.root;
  std::vector<int> new_cat(manifest.categories.size(), -1);
  for (const auto& cat : manifest.categories) {
    if (!keep_cat[static_cast<std::size_t>(cat.id)]) continue;
    new_cat[static_cast<std::size_t>(cat.id)] = static_cast<int>(out.manifest.categories.size());
    out.manifest.categories.push_back({new_cat[static_cast<std::size_t>(cat.id)], cat.name});
  }
  for (const auto& clip : manifest.clips) {
    if (!keep_cat[static_cast<std::size_t>(clip.category)] || !kept_instances.count(clip.instance_id))
      continue;
    Clip nc = clip;
    nc.category = new_cat[static_cast<std::size_t>(clip.category)];
    nc.frames.clear();
    for (int fid : clip.frames) {
      Frame fr = manifest.frames[static_cast<std::size_t>(fid)];
      fr.frame_id = static_cast<int>(out.manifest.frames.size());
      fr.category = nc.category;
      nc.frames.push_back(fr.frame_id);
      out.manifest.frames.push_back(std::move(fr));
      out.manifest.images.push_back(manifest.images.at(static_cast<std::size_t>(fid)));
    }
    out.manifest.clips.push_back(std::move(nc));
  }
  out.assignment = assignment;
  out.assignment.context_of.assign(out.manifest.categories.size(), -1);
  for (std::size_t k = 0; k < new_cat.size(); ++k)
    if (new_cat[k] >= 0)
      out.assignment.context_of[static_cast<std::size_t>(new_cat[k])] = assignment.context_of[k];
  out.manifest.validate();
  return out;
}

}  // namespace slowsem
