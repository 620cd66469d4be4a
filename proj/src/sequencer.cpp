#include "slowsem/sequencer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "slowsem/errors.hpp"

namespace slowsem {

namespace {

constexpr const char* kSequenceHeader =
    "position,frame_id,segment_id,context_name,is_segment_start,is_forced_switch";

}  // namespace

void SequenceConfig::validate() const {
  if (!(p_c >= 0.0 && p_c <= 1.0)) throw ConfigError("p_c must be in [0, 1]");
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (!(stop_fraction > 0.0 && stop_fraction <= 1.0)) throw ConfigError("stop_fraction must be in (0, 1]");
}

std::vector<Clip> train_clips(const CorpusManifest& manifest) {
  std::vector<Clip> out;
  for (const auto& clip : manifest.clips)
    if (clip.split == Split::Train) out.push_back(clip);
  return out;
}

std::vector<Segment> split_clips(const std::vector<Clip>& clips, double gamma, std::uint64_t seed) {
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  std::vector<Segment> out;
  for (const auto& clip : clips) {
    Rng rng(seed, "split-clips", static_cast<std::uint64_t>(clip.clip_id));
    const std::size_t n = clip.frames.size();
    std::size_t start = 0;
    while (start < n) {
      std::uint64_t gap = 0;
      while (gap == 0) gap = rng.poisson(gamma);
      const std::size_t end = std::min<std::size_t>(n, start + gap);
      Segment seg;
      seg.segment_id = static_cast<int>(out.size());
      seg.clip_id = clip.clip_id;
      seg.category = clip.category;
      seg.frames.assign(clip.frames.begin() + static_cast<std::ptrdiff_t>(start),
                        clip.frames.begin() + static_cast<std::ptrdiff_t>(end));
      out.push_back(std::move(seg));
      start = end;
    }
  }
  return out;
}

TemporalSequence build_sequence(const std::vector<Segment>& segments,
                                const ContextAssignment& assignment, const SequenceConfig& config) {
  config.validate();
  const int n_ctx = assignment.n_contexts();
  if (segments.empty()) throw ConfigError("no segments to sequence");
  std::vector<std::vector<int>> unused(static_cast<std::size_t>(n_ctx));
  for (std::size_t s = 0; s < segments.size(); ++s) {
    const auto cat = static_cast<std::size_t>(segments[s].category);
    if (cat >= assignment.context_of.size() || assignment.context_of[cat] < 0)
      throw ConfigError("segment " + std::to_string(s) + " has an unmapped category");
    unused[static_cast<std::size_t>(assignment.context_of[cat])].push_back(static_cast<int>(s));
  }
  int populated = 0;
  for (const auto& u : unused) populated += u.empty() ? 0 : 1;
  if (config.p_c > 0.0 && populated < 2)
    throw ConfigError("p_c > 0 requires segments in at least two contexts");

  Rng rng(config.seed, "build-sequence");
  const auto target = static_cast<std::size_t>(
      std::ceil(config.stop_fraction * static_cast<double>(segments.size()) - 1e-9));

  TemporalSequence seq;
  seq.contexts = assignment.contexts;

  auto take = [&](int ctx, bool forced) {
    auto& pool = unused[static_cast<std::size_t>(ctx)];
    const auto pick = static_cast<std::size_t>(rng.below(pool.size()));
    const int seg_index = pool[pick];
    pool[pick] = pool.back();
    pool.pop_back();
    const Segment& seg = segments[static_cast<std::size_t>(seg_index)];
    for (std::size_t f = 0; f < seg.frames.size(); ++f)
      seq.entries.push_back({seg.frames[f], seg.segment_id, ctx, f == 0, f == 0 && forced});
  };
  auto weighted_other = [&](int current) {
    std::vector<double> weights(static_cast<std::size_t>(n_ctx), 0.0);
    for (int c = 0; c < n_ctx; ++c)
      if (c != current) weights[static_cast<std::size_t>(c)] = static_cast<double>(unused[static_cast<std::size_t>(c)].size());
    return static_cast<int>(rng.weighted(weights));
  };
  auto any_other = [&](int current) {
    for (int c = 0; c < n_ctx; ++c)
      if (c != current && !unused[static_cast<std::size_t>(c)].empty()) return true;
    return false;
  };

  std::vector<int> nonempty;
  for (int c = 0; c < n_ctx; ++c)
    if (!unused[static_cast<std::size_t>(c)].empty()) nonempty.push_back(c);
  int current = nonempty[static_cast<std::size_t>(rng.below(nonempty.size()))];
  take(current, false);

  for (std::size_t consumed = 1; consumed < target; ++consumed) {
    const bool want_switch = rng.bernoulli(config.p_c);
    const bool can_stay = !unused[static_cast<std::size_t>(current)].empty();
    const bool can_switch = any_other(current);
    if (!can_stay && !can_switch) throw std::logic_error("build_sequence: all contexts exhausted");
    if (want_switch && can_switch) {
      current = weighted_other(current);
      take(current, false);
    } else if (!want_switch && can_stay) {
      take(current, false);
    } else if (can_switch) {
      current = weighted_other(current);
      take(current, true);
    } else {
      take(current, true);
    }
  }
  return seq;
}

SequenceStats measure_stats(const TemporalSequence& sequence, std::size_t total_segments) {
  SequenceStats st;
  std::size_t nonforced = 0;
  int prev_ctx = -1;
  std::size_t run = 0;
  for (std::size_t i = 0; i < sequence.entries.size(); ++i) {
    const auto& e = sequence.entries[i];
    if (!e.is_segment_start && i != 0) continue;
    ++st.n_segments;
    if (prev_ctx >= 0) {
      ++st.n_boundaries;
      const bool switched = e.context_id != prev_ctx;
      if (e.is_forced_switch) {
        ++st.n_forced;
      } else {
        ++nonforced;
        if (switched) ++st.n_switches;
      }
      if (switched) {
        ++st.context_dwell_lengths[run];
        run = 0;
      }
    }
    prev_ctx = e.context_id;
    ++run;
  }
  if (run > 0) ++st.context_dwell_lengths[run];
  st.empirical_switch_rate = nonforced == 0 ? 0.0 : static_cast<double>(st.n_switches) / nonforced;
  st.clip_coverage_fraction =
      total_segments == 0 ? 0.0 : static_cast<double>(st.n_segments) / static_cast<double>(total_segments);
  return st;
}

std::size_t sample_temporal_pair(std::size_t length, std::size_t i, int delta_t, Rng& rng) {
  if (length < 2) throw std::invalid_argument("sample_temporal_pair: sequence too short");
  if (delta_t < 1) throw std::invalid_argument("sample_temporal_pair: delta_t must be >= 1");
  const auto dt = static_cast<std::ptrdiff_t>(delta_t);
  const auto ii = static_cast<std::ptrdiff_t>(i);
  const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, ii - dt);
  const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(length) - 1, ii + dt);
  // Candidates are [lo, hi] without i.
  const auto count = static_cast<std::uint64_t>(hi - lo);
  auto j = lo + static_cast<std::ptrdiff_t>(rng.below(count));
  if (j >= ii) ++j;
  return static_cast<std::size_t>(j);
}

void write_sequence(const std::filesystem::path& path, const TemporalSequence& sequence) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IntegrityError("cannot write sequence " + path.string());
  out << kSequenceHeader << '\n';
  for (std::size_t i = 0; i < sequence.entries.size(); ++i) {
    const auto& e = sequence.entries[i];
    out << i << ',' << e.frame_id << ',' << e.segment_id << ','
        << sequence.contexts.at(static_cast<std::size_t>(e.context_id)).name << ','
        << (e.is_segment_start ? 1 : 0) << ',' << (e.is_forced_switch ? 1 : 0) << '\n';
  }
}

TemporalSequence read_sequence(const std::filesystem::path& path, std::vector<ContextId> contexts) {
  std::ifstream in(path);
  if (!in) throw IntegrityError("cannot open sequence " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kSequenceHeader)
    throw ParseError("sequence header must be '" + std::string(kSequenceHeader) + "'", 1);
  const bool open_contexts = contexts.empty();
  TemporalSequence seq;
  seq.contexts = std::move(contexts);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) f.push_back(field);
    if (f.size() != 6) throw ParseError("expected 6 fields", line_no);
    try {
      if (std::stoul(f[0]) != seq.entries.size()) throw ParseError("positions must be consecutive", line_no);
      SequenceEntry e;
      e.frame_id = std::stoi(f[1]);
      e.segment_id = std::stoi(f[2]);
      int ctx = -1;
      for (const auto& c : seq.contexts)
        if (c.name == f[3]) ctx = c.id;
      if (ctx < 0) {
        if (!open_contexts) throw ParseError("unknown context '" + f[3] + "'", line_no);
        ctx = static_cast<int>(seq.contexts.size());
        seq.contexts.push_back({ctx, f[3]});
      }
      e.context_id = ctx;
      e.is_segment_start = f[4] == "1";
      e.is_forced_switch = f[5] == "1";
      seq.entries.push_back(e);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("bad numeric field", line_no);
    }
  }
  return seq;
}

}  // namespace slowsem
