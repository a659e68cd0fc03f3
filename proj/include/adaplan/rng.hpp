#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace adaplan {

// Seedable, splittable pseudo-random stream (xoshiro256** seeded through
// splitmix64). Only integer arithmetic feeds the state, so a given seed
// yields the same raw stream on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  // uniform double in [0, 1) with 53 random bits
  double uniform();
  double uniform(double lo, double hi);

  // unbiased integer in [0, n); n must be positive
  std::uint64_t uniform_int(std::uint64_t n);

  // standard normal (Box-Muller, spare value cached)
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  // Child streams are derived from this stream's seed, not its position,
  // so a split does not depend on how many draws were made before it.
  Rng split(std::string_view label) const;
  Rng split(std::uint64_t index) const;

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// splitmix64 finalizer, also used for hashing seeds together
std::uint64_t mix64(std::uint64_t x);

// FNV-1a over raw bytes
std::uint64_t fnv1a64(std::span<const unsigned char> bytes,
                      std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace adaplan
