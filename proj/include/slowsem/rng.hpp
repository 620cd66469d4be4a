#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace slowsem {

// Derives an independent stream seed from a base seed, a stream tag and an
// index. Used so that every random consumer (clip renderer, training step,
// triplet) gets its own reproducible stream regardless of evaluation order.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

// Portable random stream. The engine is std::mt19937_64, whose output is fully
// specified by the standard; the distributions below are implemented here
// because the <random> distributions are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0)
      : engine_(derive_seed(seed, tag, index)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer on [0, n). n must be > 0. Rejection sampling, no modulo bias.
  std::uint64_t below(std::uint64_t n);
  // Uniform integer on [lo, hi] inclusive.
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  bool bernoulli(double p) { return uniform01() < p; }

  // Knuth's multiplication method; intended for small means.
  std::uint64_t poisson(double mean);

  double normal();

  // Index drawn with probability proportional to weights. Requires a positive total.
  std::size_t weighted(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace slowsem
