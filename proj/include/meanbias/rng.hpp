#pragma once

#include <cstdint>

namespace meanbias {

/// Mixes a 64-bit value through the splitmix64 finalizer. Used for seeding
/// and for deriving per-repetition seeds: rep r of a run with master seed s
/// uses split_mix(s + 0x9e3779b97f4a7c15 * (r + 1)).
inline std::uint64_t split_mix(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return split_mix(master + 0x9e3779b97f4a7c15ULL * (stream + 1));
}

/// xoshiro256++ generator. One call to next() consumes exactly one word of
/// the stream; every bin sample and every mixing coin costs one word, which
/// pins down reproducibility of all simulations given (config, seed).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // Seed the full state through splitmix64, as recommended for xoshiro.
    std::uint64_t z = seed;
    for (auto& word : state_) {
      z = split_mix(z);
      word = z;
    }
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform bin index in [0, n) via the fixed-point multiply-high map.
  /// Single word per sample, no rejection loop; the deviation from exact
  /// uniformity is at most n / 2^64 per bin.
  std::uint64_t uniform(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Bernoulli coin: true with probability round(p * 2^64) / 2^64.
  bool coin(double p) {
    if (p >= 1.0) return true;
    if (p <= 0.0) return false;
    const double scaled = p * 18446744073709551616.0;  // 2^64
    const std::uint64_t threshold = static_cast<std::uint64_t>(scaled);
    return next() < threshold;
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t state_[4];
};

}  // namespace meanbias
