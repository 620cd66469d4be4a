#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <vector>

#include "slowsem/corpus.hpp"
#include "slowsem/rng.hpp"

namespace slowsem {

// Contiguous run of frames cut from one clip.
struct Segment {
  int segment_id = 0;
  int clip_id = 0;
  int category = 0;
  std::vector<int> frames;
  bool operator==(const Segment&) const = default;
};

struct SequenceConfig {
  double p_c = 0.1;
  double gamma = 8.0;
  double stop_fraction = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SequenceEntry {
  int frame_id = 0;
  int segment_id = 0;
  int context_id = 0;
  bool is_segment_start = false;
  // Set on the first entry of a segment whose context was imposed by
  // exhaustion rather than by the p_c draw.
  bool is_forced_switch = false;
  bool operator==(const SequenceEntry&) const = default;
};

struct TemporalSequence {
  std::vector<SequenceEntry> entries;
  std::vector<ContextId> contexts;  // names for context ids in entries

  std::size_t size() const { return entries.size(); }
  bool operator==(const TemporalSequence&) const = default;
};

struct SequenceStats {
  std::size_t n_segments = 0;
  std::size_t n_boundaries = 0;
  std::size_t n_forced = 0;
  std::size_t n_switches = 0;  // inter-context switches among non-forced boundaries
  double empirical_switch_rate = 0.0;
  std::map<std::size_t, std::size_t> context_dwell_lengths;  // run length (segments) -> count
  double clip_coverage_fraction = 0.0;
};

// Cuts every clip at cumulative Poisson(gamma) gaps (zero gaps redrawn). The
// remainder after the last section point forms the final segment. Segment ids
// are dense in output order.
std::vector<Segment> split_clips(const std::vector<Clip>& clips, double gamma, std::uint64_t seed);

// Concatenates segments into one stream. Starts from a uniform context and a
// uniform unused segment in it; at each boundary switches context with
// probability p_c (target context weighted by its unused segment count),
// otherwise stays. A stay with no unused segments left is turned into a
// weighted switch and flagged as forced. Stops after ceil(stop_fraction * n)
// segments.
TemporalSequence build_sequence(const std::vector<Segment>& segments,
                                const ContextAssignment& assignment, const SequenceConfig& config);

SequenceStats measure_stats(const TemporalSequence& sequence, std::size_t total_segments);

// Uniform draw from {i - delta_t, ..., i + delta_t} \ {i}, clamped to the sequence.
std::size_t sample_temporal_pair(std::size_t length, std::size_t i, int delta_t, Rng& rng);

// `position,frame_id,segment_id,context_name,is_segment_start,is_forced_switch`
void write_sequence(const std::filesystem::path& path, const TemporalSequence& sequence);
// With a non-empty context list, names resolve to those ids; otherwise contexts
// are numbered by first appearance.
TemporalSequence read_sequence(const std::filesystem::path& path, std::vector<ContextId> contexts = {});

// Train clips of the manifest, the input to split_clips.
std::vector<Clip> train_clips(const CorpusManifest& manifest);

}  // namespace slowsem
