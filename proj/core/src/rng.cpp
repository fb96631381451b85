#include "voc/rng.hpp"

#include <cmath>

#include "voc/error.hpp"

namespace voc {

uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& w : s_) w = splitmix64(x);
}

uint64_t Rng::mix_seed(uint64_t seed, uint64_t stream) {
  uint64_t x = seed;
  uint64_t a = splitmix64(x);
  x = a ^ (stream * 0x9e3779b97f4a7c15ull + 0x632be59bd9b4e019ull);
  return splitmix64(x);
}

static inline uint64_t rotl(uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

uint64_t Rng::uniform_int(uint64_t n) {
  if (n == 0) throw InvalidInputError("uniform_int: n must be positive");
  const uint64_t threshold = (0ull - n) % n;  // reject below to remove modulo bias
  for (;;) {
    uint64_t r = next_u64();
    if (r >= threshold) return r % n;
  }
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller; u clamped away from 0 so log stays finite.
  double u = uniform();
  if (u <= 0.0) u = 0x1.0p-53;
  double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double theta = 6.283185307179586476925286766559 * v;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  if (weights.empty()) throw InvalidInputError("categorical: empty weight vector");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidInputError("categorical: weights sum to zero");
  const double r = uniform() * total;
  double c = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    c += weights[i];
    if (r < c) return i;
  }
  return weights.size() - 1;
}

}  // namespace voc
