#pragma once

#include <cstdint>
#include <random>
#include <utility>

namespace stackvet {

// Seeded generator with portable derived distributions. The engine is
// std::mt19937_64 (fully specified by the standard); the uniform/normal
// transforms are implemented here so streams are identical across standard
// libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller.
  double normal();

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  /// Unbiased integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  /// Independent child generator for stream `stream`; does not advance *this.
  Rng fork(std::uint64_t stream) const;

  template <typename It>
  void shuffle(It first, It last) {
    const auto n = static_cast<std::uint64_t>(last - first);
    for (std::uint64_t i = n; i > 1; --i) {
      const auto j = below(i);
      using std::swap;
      swap(first[i - 1], first[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer; used to derive child seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

}  // namespace stackvet
