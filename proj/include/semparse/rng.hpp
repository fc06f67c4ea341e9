#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace semparse {

/// Purposes that get their own independent random stream. A stream's seed is
/// splitmix64(seed ^ (0x9E3779B97F4A7C15 * (id + 1))), so adding a new purpose
/// never perturbs the draws of an existing one.
enum class RngStream : std::uint64_t {
  kInit = 0,
  kDropout = 1,
  kShuffle = 2,
  kDevSplit = 3,
  kGradCheck = 4,
  kTest = 5,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic generator built on std::mt19937_64, whose output sequence is
/// fixed by the C++ standard. All derived draws (uniform reals, bounded
/// integers) are computed here rather than through <random> distributions,
/// whose algorithms are implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}
  Rng(std::uint64_t seed, RngStream stream);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n); rejection sampling removes modulo bias.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  template <typename Container>
  void shuffle(Container& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      using std::swap;
      swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace semparse
