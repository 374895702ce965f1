#pragma once

#include <cstdint>
#include <initializer_list>

namespace skysentry {

/// SplitMix64 (Steele, Lea, Flood 2014). Small, fast and splittable by key,
/// which is all the simulator needs for replayable per-frame streams.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1) with 53 bits of mantissa.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (one draw per call).
  double normal();

 private:
  std::uint64_t state_;
};

/// Folds a sequence of integers into one well-mixed 64-bit key.
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

inline SplitMix64 keyed_stream(std::initializer_list<std::uint64_t> parts) {
  return SplitMix64(stream_key(parts));
}

}  // namespace skysentry
