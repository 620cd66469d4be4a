#include "slowsem/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace slowsem {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index) {
  // FNV-1a over the tag, mixed with seed and index through splitmix64.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t state = seed ^ h;
  std::uint64_t a = splitmix64(state);
  state ^= index * 0xD1B54A32D192ED03ULL;
  std::uint64_t b = splitmix64(state);
  return a ^ (b << 1);
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % n;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("Rng::between: empty range");
  return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

std::uint64_t Rng::poisson(double mean) {
  if (!(mean > 0.0)) throw std::invalid_argument("Rng::poisson: mean must be positive");
  const double limit = std::exp(-mean);
  std::uint64_t k = 0;
  double p = uniform01();
  while (p > limit) {
    ++k;
    p *= uniform01();
  }
  return k;
}

double Rng::normal() {
  // Box-Muller; the second variate is discarded to keep the stream stateless.
  double u1;
  do {
    u1 = uniform01();
  } while (u1 <= 0.0);
  double u2 = uniform01();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t Rng::weighted(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw std::invalid_argument("Rng::weighted: weights must have positive sum");
  double target = uniform01() * total;
  std::size_t last_positive = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = i;
    if (target < weights[i]) return i;
    target -= weights[i];
  }
  return last_positive;
}

}  // namespace slowsem
