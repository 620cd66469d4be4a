#include <algorithm>
#include <array>
#include <cstdlib>
#include <span>

#include "slowsem/corpus.hpp"
#include "slowsem/errors.hpp"
#include "slowsem/rng.hpp"

namespace slowsem {

namespace {

using i64 = std::int64_t;

constexpr int kShapes = 16;
constexpr std::array<const char*, kShapes> kShapeNames = {
    "disk",  "square",       "triangle", "plus",     "diamond",  "ring",
    "oval",  "saltire",      "frame",    "tee",      "ell",      "halfdisk",
    "hourglass", "crescent", "octagram", "twodots"};

constexpr std::array<const char*, 8> kContextNames = {
    "kitchen", "living_room", "bedroom", "bathroom", "nursery", "hallway", "office", "garage"};

// Tint offsets from mid gray for context backgrounds, scaled by background_contrast / 40.
constexpr std::array<std::array<int, 3>, 8> kContextTint = {{{22, 4, -18},
                                                             {-16, 6, 22},
                                                             {12, -14, 12},
                                                             {-14, 18, -6},
                                                             {20, 20, -24},
                                                             {-22, -8, -8},
                                                             {26, -10, -12},
                                                             {-4, -4, 26}}};

// sin of k*15 degrees in Q14, k = 0..6.
constexpr std::array<i64, 7> kSinQuarter = {0, 4240, 8192, 11585, 14189, 15826, 16384};

i64 sin_q14(int step) {
  step = ((step % 24) + 24) % 24;
  if (step <= 6) return kSinQuarter[static_cast<std::size_t>(step)];
  if (step <= 12) return kSinQuarter[static_cast<std::size_t>(12 - step)];
  if (step <= 18) return -kSinQuarter[static_cast<std::size_t>(step - 12)];
  return -kSinQuarter[static_cast<std::size_t>(24 - step)];
}

i64 cos_q14(int step) { return sin_q14(step + 6); }

i64 sq(i64 v) { return v * v; }

// Shape membership in object coordinates (u, v) scaled so that r is the shape radius.
bool inside_shape(int shape, i64 u, i64 v, i64 r) {
  const i64 au = std::llabs(u), av = std::llabs(v);
  switch (shape) {
    case 0: return sq(u) + sq(v) <= sq(r);
    case 1: return 5 * au <= 4 * r && 5 * av <= 4 * r;
    case 2: return 2 * v <= r && 100 * v >= -100 * r + 173 * au;
    case 3: return (10 * au <= 3 * r && av <= r) || (10 * av <= 3 * r && au <= r);
    case 4: return au + av <= r;
    case 5: return sq(u) + sq(v) <= sq(r) && 100 * (sq(u) + sq(v)) >= 25 * sq(r);
    case 6: return sq(u) + 4 * sq(v) <= sq(r);
    case 7: {
      const i64 d1 = std::llabs(u - v), d2 = std::llabs(u + v);
      return (10 * d1 <= 4 * r && 10 * d2 <= 14 * r) || (10 * d2 <= 4 * r && 10 * d1 <= 14 * r);
    }
    case 8: {
      const i64 m = std::max(au, av);
      return 100 * m <= 85 * r && 2 * m >= r;
    }
    case 9: return (4 * std::llabs(4 * v + 3 * r) <= 4 * r && au <= r) || (4 * au <= r && av <= r);
    case 10:
      return (u <= -2 * r / 5 && u >= -r && av <= r) || (v >= 2 * r / 5 && v <= r && au <= r);
    case 11: return sq(u) + sq(v) <= sq(r) && 10 * v >= -r;
    case 12: return 10 * au <= 9 * av && av <= r;
    case 13: return sq(u) + sq(v) <= sq(r) && 100 * (sq(2 * u - r) + 4 * sq(v)) > 256 * sq(r);
    case 14: return (100 * std::max(au, av) <= 72 * r) || (au + av <= r);
    case 15:
      return 100 * (sq(2 * u - r) + 4 * sq(v)) <= 81 * sq(r) ||
             100 * (sq(2 * u + r) + 4 * sq(v)) <= 81 * sq(r);
    default: return false;
  }
}

// Variants distinguish categories beyond the base shape set.
bool inside_category(int category, i64 u, i64 v, i64 r) {
  const int shape = category % kShapes;
  const int variant = (category / kShapes) % 3;
  if (!inside_shape(shape, u, v, r)) return false;
  if (variant == 1) return 16 * (sq(u) + sq(v)) >= sq(r);          // punched center
  if (variant == 2) return !(8 * std::llabs(v) <= r);              // horizontal slot
  return true;
}

std::array<int, 3> hsv_to_rgb(int hue, int sat, int val) {
  // hue in [0, 360), sat and val in [0, 255].
  const int region = hue / 60;
  const int rem = (hue % 60) * 255 / 60;
  const int p = val * (255 - sat) / 255;
  const int q = val * (255 - sat * rem / 255) / 255;
  const int t = val * (255 - sat * (255 - rem) / 255) / 255;
  switch (region) {
    case 0: return {val, t, p};
    case 1: return {q, val, p};
    case 2: return {p, val, t};
    case 3: return {p, q, val};
    case 4: return {t, p, val};
    default: return {val, p, q};
  }
}

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

struct InstanceLook {
  std::array<int, 3> color;
  int size_percent;
  int base_rotation;
};

int category_hue(const SynthSpec& spec, int category, std::uint64_t seed) {
  const int n = spec.n_categories();
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) order[static_cast<std::size_t>(k)] = k;
  Rng rng(seed, "category-hue");
  rng.shuffle(std::span<int>(order));
  return order[static_cast<std::size_t>(category % n)] * 360 / n;
}

InstanceLook instance_look(const SynthSpec& spec, int category, int instance_id, std::uint64_t seed) {
  Rng rng(seed, "instance-look", static_cast<std::uint64_t>(instance_id));
  InstanceLook look;
  int hue = static_cast<int>(rng.below(360));
  if (spec.category_hue_spread >= 0) {
    const int offset = static_cast<int>(rng.between(-spec.category_hue_spread, spec.category_hue_spread));
    hue = ((category_hue(spec, category, seed) + offset) % 360 + 360) % 360;
  }
  // Draws from [center - half, center + half] with half scaled by instance_color_variation.
  auto spread = [&](int center, int half) {
    const int h = half * spec.instance_color_variation / 100;
    return static_cast<int>(rng.between(center - h, center + h));
  };
  const int sat = spread(190, 40);
  const int val = spread(207, 37);
  look.color = hsv_to_rgb(hue, sat, val);
  look.size_percent = 100 + static_cast<int>(rng.between(-spec.instance_size_percent, spec.instance_size_percent));
  look.base_rotation = static_cast<int>(rng.between(0, spec.instance_rotation_steps));
  return look;
}

std::array<int, 3> context_base(int context, int contrast) {
  std::array<int, 3> tint;
  if (context < static_cast<int>(kContextTint.size())) {
    tint = kContextTint[static_cast<std::size_t>(context)];
  } else {
    Rng rng(static_cast<std::uint64_t>(context), "context-tint");
    for (auto& t : tint) t = static_cast<int>(rng.between(-26, 26));
  }
  std::array<int, 3> base;
  for (int ch = 0; ch < 3; ++ch) base[ch] = 128 + tint[ch] * contrast / 40;
  return base;
}

}  // namespace

const char* to_string(BackgroundMode mode) {
  return mode == BackgroundMode::ContextCorrelated ? "context" : "neutral";
}

BackgroundMode parse_background_mode(const std::string& text) {
  if (text == "context" || text == "context-correlated") return BackgroundMode::ContextCorrelated;
  if (text == "neutral") return BackgroundMode::Neutral;
  throw ConfigError("unknown background mode '" + text + "'");
}

void SynthSpec::validate() const {
  if (n_contexts < 1 || categories_per_context < 1 || instances_per_category < 1 || frames_per_clip < 1)
    throw ConfigError("synthetic corpus counts must be >= 1");
  if (test_instances_per_category < 0 || test_instances_per_category >= instances_per_category)
    throw ConfigError("test_instances_per_category must be in [0, instances_per_category)");
  if (image_size < 16) throw ConfigError("image_size must be >= 16");
  if (background_contrast < 0 || background_contrast > 127)
    throw ConfigError("background_contrast must be in [0, 127]");
  if (pose_jitter.rotation_steps < 0 || pose_jitter.scale_percent < 0 || pose_jitter.scale_percent > 50 ||
      pose_jitter.translation_px < 0)
    throw ConfigError("invalid pose jitter");
  if (light_jitter < 0 || light_jitter > 127) throw ConfigError("light_jitter must be in [0, 127]");
  if (instance_color_variation < 0 || instance_color_variation > 100)
    throw ConfigError("instance_color_variation must be in [0, 100]");
  if (instance_size_percent < 0 || instance_size_percent > 40)
    throw ConfigError("instance_size_percent must be in [0, 40]");
  if (instance_rotation_steps < 0 || instance_rotation_steps > 23)
    throw ConfigError("instance_rotation_steps must be in [0, 23]");
  if (category_hue_spread > 180) throw ConfigError("category_hue_spread must be <= 180");
}

RenderedFrame render_frame(const SynthSpec& spec, int category, int context, int instance_id,
                           int frame_index, std::uint64_t seed) {
  const int S = spec.image_size;
  const InstanceLook look = instance_look(spec, category, instance_id, seed);
  Rng rng(derive_seed(seed, "frame", static_cast<std::uint64_t>(instance_id)), "pose",
          static_cast<std::uint64_t>(frame_index));
  const auto& jit = spec.pose_jitter;
  const int rotation = look.base_rotation + static_cast<int>(rng.between(-jit.rotation_steps, jit.rotation_steps));
  const int scale = 100 + static_cast<int>(rng.between(-jit.scale_percent, jit.scale_percent));
  const int shift_x = static_cast<int>(rng.between(-jit.translation_px, jit.translation_px));
  const int shift_y = static_cast<int>(rng.between(-jit.translation_px, jit.translation_px));
  const int light = static_cast<int>(rng.between(-spec.light_jitter, spec.light_jitter));

  // Q8 fixed point throughout: pixel centers at (x + 0.5) * 256.
  const i64 cx = static_cast<i64>(S) * 128 + shift_x * 256;
  const i64 cy = static_cast<i64>(S) * 128 + shift_y * 256;
  const i64 radius = static_cast<i64>(S) * 256 * 30 / 100 * look.size_percent / 100 * scale / 100;
  const i64 cs = cos_q14(rotation), sn = sin_q14(rotation);

  std::array<int, 3> bg_base{128, 128, 128};
  const bool textured = spec.background_mode == BackgroundMode::ContextCorrelated;
  if (textured) bg_base = context_base(context, spec.background_contrast);
  const int stripe_amp = spec.background_contrast / 2;
  const int orientation = context % 4;
  const int period = 4 + 2 * ((context / 4) % 3);

  RenderedFrame out{RgbImage(S, S), std::vector<std::uint8_t>(static_cast<std::size_t>(S) * S, 0)};
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      const i64 dx = static_cast<i64>(x) * 256 + 128 - cx;
      const i64 dy = static_cast<i64>(y) * 256 + 128 - cy;
      const i64 u = (cs * dx + sn * dy) >> 14;
      const i64 v = (-sn * dx + cs * dy) >> 14;
      if (inside_category(category, u, v, radius)) {
        out.object_mask[static_cast<std::size_t>(y) * S + x] = 1;
        out.image.set(x, y, clamp_u8(look.color[0] + light), clamp_u8(look.color[1] + light),
                      clamp_u8(look.color[2] + light));
        continue;
      }
      if (!textured) {
        out.image.set(x, y, 128, 128, 128);
        continue;
      }
      // Stripes move with the camera shift so the texture drifts across frames.
      const int sx = x - shift_x, sy = y - shift_y;
      int coord = 0;
      switch (orientation) {
        case 0: coord = sx; break;
        case 1: coord = sy; break;
        case 2: coord = sx + sy; break;
        default: coord = sx - sy; break;
      }
      const int band = ((coord % period) + period) % period < period / 2 ? 1 : -1;
      const int noise = static_cast<int>(rng.between(-6, 6));
      out.image.set(x, y, clamp_u8(bg_base[0] + band * stripe_amp + noise),
                    clamp_u8(bg_base[1] + band * stripe_amp + noise),
                    clamp_u8(bg_base[2] + band * stripe_amp + noise));
    }
  }
  return out;
}

SynthCorpus synthesize_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  SynthCorpus out;
  CorpusManifest& m = out.manifest;
  ContextAssignment& a = out.base_assignment;
  for (int c = 0; c < spec.n_contexts; ++c) {
    std::string name = c < static_cast<int>(kContextNames.size())
                           ? kContextNames[static_cast<std::size_t>(c)]
                           : "context" + std::to_string(c);
    a.contexts.push_back({c, name});
  }
  const int K = spec.n_categories();
  for (int k = 0; k < K; ++k) {
    std::string name = kShapeNames[static_cast<std::size_t>(k % kShapes)];
    if (k >= kShapes) name += "_v" + std::to_string(k / kShapes);
    m.categories.push_back({k, name});
    a.context_of.push_back(k / spec.categories_per_context);
  }
  for (int k = 0; k < K; ++k) {
    const int context = a.context_of[static_cast<std::size_t>(k)];
    for (int j = 0; j < spec.instances_per_category; ++j) {
      const int instance = k * spec.instances_per_category + j;
      Clip clip;
      clip.clip_id = instance;
      clip.instance_id = instance;
      clip.category = k;
      clip.split = j >= spec.instances_per_category - spec.test_instances_per_category ? Split::Test
                                                                                       : Split::Train;
      for (int f = 0; f < spec.frames_per_clip; ++f) {
        Frame fr;
        fr.frame_id = static_cast<int>(m.frames.size());
        fr.clip_id = clip.clip_id;
        fr.frame_index = f;
        fr.instance_id = instance;
        fr.category = k;
        fr.path = "images/" + std::to_string(clip.clip_id) + "/" + std::to_string(f) + ".bmp";
        clip.frames.push_back(fr.frame_id);
        m.frames.push_back(std::move(fr));
        m.images.push_back(render_frame(spec, k, context, instance, f, seed).image);
      }
      m.clips.push_back(std::move(clip));
    }
  }
  m.validate();
  return out;
}

}  // namespace slowsem
