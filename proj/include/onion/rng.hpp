#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace onion {

// Seeded generator whose stream is identical on every platform.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the
// standard. The standard *distributions* are not portable, so every
// derived quantity (reals, bounded integers, shuffles) is computed here
// from raw 64-bit draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform01();

  // Uniform on [lo, hi).
  double uniform(double lo, double hi);

  // Uniform integer in [0, n); n must be positive. Unbiased (rejection).
  std::size_t uniform_index(std::size_t n);

  bool bernoulli(double p);

  // Index sampled with probability proportional to weights[i].
  // Weights must be non-negative with a positive sum.
  std::size_t weighted_index(std::span<const double> weights);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = uniform_index(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

  // Independent generator for sub-task `stream`; does not advance this one.
  Rng child(std::uint64_t stream) const { return Rng(derive_seed(seed_, stream)); }

  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

}  // namespace onion
