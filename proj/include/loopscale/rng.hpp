#pragma once

// Seeded random numbers with a fixed, platform-independent algorithm.
//
// The engine is std::mt19937_64, whose output sequence is pinned by the
// standard. The distribution transforms below are written out by hand
// because the std:: distributions are implementation-defined. Independent
// streams (one per restart, per resample, per synthetic cell) come from
// derive_seed(seed, stream).

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace loopscale {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return mix64(mix64(seed) ^ mix64(stream + 0x632BE59BD9B4E019ULL));
}

// Sub-stream offsets, so that e.g. restart 0 and resample 0 never share bits.
inline constexpr std::uint64_t kRestartStream = 0x1000'0000ULL;
inline constexpr std::uint64_t kResampleStream = 0x2000'0000ULL;
inline constexpr std::uint64_t kNoiseStream = 0x3000'0000ULL;

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), unbiased by rejection.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % n;
  }

  /// Standard normal via Box-Muller, one draw per call.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace loopscale
