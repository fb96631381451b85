#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace voc {

/// splitmix64 step. Advances `x` and returns the next output.
uint64_t splitmix64(uint64_t& x);

/// xoshiro256** generator (Blackman & Vigna, public domain reference).
///
/// Seeding rule, fixed so sequences reproduce across implementations:
/// the four state words are the first four outputs of splitmix64
/// initialised with the seed. Substream k of seed s is an Rng seeded
/// with mix_seed(s, k) below. All sampling helpers consume draws in the
/// documented order and use no platform-dependent distributions.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  /// Independent stream derivation: stream index folded into the seed
  /// through two splitmix64 applications.
  static uint64_t mix_seed(uint64_t seed, uint64_t stream);
  static Rng substream(uint64_t seed, uint64_t stream) { return Rng(mix_seed(seed, stream)); }

  uint64_t next_u64();

  /// Uniform double in [0, 1), 53 significant bits.
  double uniform();

  /// Uniform integer in [0, n). n must be > 0. Unbiased (rejection sampling).
  uint64_t uniform_int(uint64_t n);

  /// Standard normal via Box-Muller; one spare draw is cached.
  double normal();

  /// Index sampled from an unnormalised weight vector using a single
  /// uniform draw and a left-to-right cumulative scan.
  std::size_t categorical(std::span<const double> weights);

  /// Fisher-Yates shuffle of index order, consuming one uniform_int per swap.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace voc
