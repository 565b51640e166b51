#pragma once

#include <cstdint>
#include <random>

namespace aoisched {

/// splitmix64 finalizer; used to derive well-separated seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic 64-bit stream (mt19937_64) with explicit sub-stream
/// derivation: replication r of base seed s is seeded with
/// mix64(mix64(s) ^ mix64(r + 1)).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  static Rng substream(std::uint64_t base_seed, std::uint64_t index) {
    return Rng(mix64(base_seed) ^ mix64(index + 1));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  std::uint64_t next() { return engine_(); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace aoisched
