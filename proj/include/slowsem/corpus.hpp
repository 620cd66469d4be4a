#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "slowsem/bmp.hpp"

namespace slowsem {

enum class Split { Train, Test };

const char* to_string(Split split);
Split parse_split(const std::string& text);

// Dense ids 0..C-1 for contexts and 0..K-1 for categories.
struct ContextId {
  int id = 0;
  std::string name;
  bool operator==(const ContextId&) const = default;
};

struct CategoryId {
  int id = 0;
  std::string name;
  bool operator==(const CategoryId&) const = default;
};

// One frame reference. frame_id is the dense index into CorpusManifest::frames.
struct Frame {
  int frame_id = 0;
  int clip_id = 0;
  int frame_index = 0;
  int instance_id = 0;
  int category = 0;
  std::string path;  // relative to the corpus root
  bool operator==(const Frame&) const = default;
};

struct Clip {
  int clip_id = 0;
  int instance_id = 0;
  int category = 0;
  Split split = Split::Train;
  std::vector<int> frames;  // frame ids in temporal order
  bool operator==(const Clip&) const = default;
};

// Catalog of clips and frames. Images are held in memory, indexed by frame_id.
struct CorpusManifest {
  std::vector<CategoryId> categories;
  std::vector<Clip> clips;
  std::vector<Frame> frames;
  std::vector<RgbImage> images;
  std::filesystem::path root;

  int image_width() const { return images.empty() ? 0 : images.front().width; }
  int image_height() const { return images.empty() ? 0 : images.front().height; }
  const RgbImage& image(int frame_id) const { return images.at(static_cast<std::size_t>(frame_id)); }
  int category_index(const std::string& name) const;  // -1 when absent

  // Throws IntegrityError naming the first broken invariant.
  void validate() const;

  // Records compare equal; the root directory is not part of the identity.
  bool same_records(const CorpusManifest& other) const;
};

enum class AssignmentMode { Fixed, Shuffled };

const char* to_string(AssignmentMode mode);
AssignmentMode parse_assignment_mode(const std::string& text);

// Category -> context mapping. context_of[k] == -1 marks an unmapped category.
struct ContextAssignment {
  std::vector<ContextId> contexts;
  std::vector<int> context_of;
  AssignmentMode mode = AssignmentMode::Fixed;
  std::uint64_t seed = 0;

  int n_contexts() const { return static_cast<int>(contexts.size()); }
  int context_index(const std::string& name) const;  // -1 when absent
  std::vector<int> categories_per_context() const;
  bool operator==(const ContextAssignment&) const = default;
};

// Reads `manifest.csv`-style records and loads every referenced image relative
// to the manifest's directory. Malformed records throw ParseError naming the
// line; missing images or broken invariants throw IntegrityError.
CorpusManifest load_manifest(const std::filesystem::path& path);

// Reads `category_name,context_name` lines and maps them onto the manifest's
// categories. Contexts are numbered by first appearance. Categories absent from
// the file are left unmapped (-1); assign_contexts reports them.
ContextAssignment load_context_mapping(const std::filesystem::path& path,
                                       const CorpusManifest& manifest);

void write_manifest(const std::filesystem::path& path, const CorpusManifest& manifest);
void write_context_mapping(const std::filesystem::path& path, const CorpusManifest& manifest,
                           const ContextAssignment& assignment);

// Writes images/<clip_id>/<frame_index>.bmp, manifest.csv and contexts.csv.
// Frame paths in the written manifest follow that layout.
void write_corpus(const std::filesystem::path& dir, const CorpusManifest& manifest,
                  const ContextAssignment& assignment);

// Fixed mode returns base unchanged. Shuffled mode permutes the context slots
// over categories with a seed-deterministic shuffle, which keeps the number of
// categories per context. Throws ConfigError listing unmapped categories.
ContextAssignment assign_contexts(const CorpusManifest& manifest, const ContextAssignment& base,
                                  AssignmentMode mode, std::uint64_t seed);

struct BalancedCorpus {
  CorpusManifest manifest;
  ContextAssignment assignment;
};

// Keeps the first m categories (by id) of every context, m being the smallest
// per-context category count, then keeps per split the first n instances of
// every kept category, n being the smallest per-split instance count. Category
// and frame ids are re-densified; the assignment is re-indexed accordingly.
BalancedCorpus balance_corpus(const CorpusManifest& manifest, const ContextAssignment& assignment);

// ---------------------------------------------------------------------------
// Procedural corpus

enum class BackgroundMode { ContextCorrelated, Neutral };

const char* to_string(BackgroundMode mode);
BackgroundMode parse_background_mode(const std::string& text);

struct PoseJitter {
  int rotation_steps = 2;   // max per-frame rotation, in 15 degree steps
  int scale_percent = 12;   // per-frame scale varies in [100 - s, 100 + s] percent
  int translation_px = 3;   // per-frame shift in pixels along each axis
  bool operator==(const PoseJitter&) const = default;
};

struct SynthSpec {
  int n_contexts = 8;
  int categories_per_context = 2;
  int instances_per_category = 12;
  int test_instances_per_category = 3;
  int frames_per_clip = 20;
  int image_size = 32;
  BackgroundMode background_mode = BackgroundMode::ContextCorrelated;
  int background_contrast = 3;  // stripe amplitude of context backgrounds, 0..127
  PoseJitter pose_jitter;
  int light_jitter = 4;  // per-frame brightness offset range, +-
  // Negative: every instance draws any hue. Otherwise each category owns an
  // evenly spaced hue (shuffled over categories) and instances vary it by up to
  // this many degrees.
  int category_hue_spread = 15;
  int instance_color_variation = 100;  // percent of the full saturation/value ranges between instances
  int instance_size_percent = 12;       // instance size varies in [100 - s, 100 + s] percent
  int instance_rotation_steps = 23;     // base orientation in [0, n] steps of 15 degrees

  // Throws ConfigError on invalid counts.
  void validate() const;
  int n_categories() const { return n_contexts * categories_per_context; }
};

struct SynthCorpus {
  CorpusManifest manifest;
  ContextAssignment base_assignment;  // block assignment: categories [c*m, (c+1)*m) -> context c
};

// One clip per instance. Shape is fixed by the category, hue by the instance,
// pose jitters across frames, and the background is a texture chosen by the
// instance's context (or flat gray in neutral mode). Integer-only rendering;
// output is a pure function of (spec, seed).
SynthCorpus synthesize_corpus(const SynthSpec& spec, std::uint64_t seed);

struct RenderedFrame {
  RgbImage image;
  std::vector<std::uint8_t> object_mask;  // 1 where the object covers the pixel
};

// Renders a single frame. Exposed for tests that need the object mask.
RenderedFrame render_frame(const SynthSpec& spec, int category, int context, int instance_id,
                           int frame_index, std::uint64_t seed);

}  // namespace slowsem
