#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dna {

/// Counter-based generator built on the SplitMix64 finalizer.
///
/// The i-th draw of stream (seed, stream) is mix64(key + (i + 1) * 0x9E3779B97F4A7C15)
/// with key = mix64(seed ^ mix64(stream)). Draws are therefore a pure function
/// of (seed, stream, i) and identical on every platform; independent streams
/// (one per parameter, per scene index, ...) never share state.
class CounterRng {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed ^ mix64(stream + kGolden))) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGolden); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] (inclusive); modulo bias is below 2^-40 for the ranges used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = std::uint64_t(hi - lo) + 1;
    return lo + std::int64_t(next_u64() % span);
  }

  /// Standard normal via Box-Muller; each call consumes two uniforms.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Stable 64-bit FNV-1a hash, used to derive per-name RNG streams.
constexpr std::uint64_t fnv1a(const char* s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  while (*s) {
    h ^= std::uint64_t(static_cast<unsigned char>(*s++));
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace dna
