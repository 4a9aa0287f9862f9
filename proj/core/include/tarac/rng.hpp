// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace tarac {

// SplitMix64 (Steele, Lea & Flood 2014). It is fully specified by integer
// arithmetic, so streams are identical on every platform and language:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// Independent streams are derived with `SplitMix64::stream(seed, id)`, which
// seeds a generator with mix64(seed ^ mix64(id + golden)). Weight tensors use
// one stream id per (layer, tensor kind); see model.cpp.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  constexpr explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  static constexpr SplitMix64 stream(std::uint64_t seed, std::uint64_t stream_id) noexcept {
    return SplitMix64(mix64(seed ^ mix64(stream_id + kGolden)));
  }

  constexpr std::uint64_t next() noexcept {
    state_ += kGolden;
    return mix64(state_);
  }

  /// Uniform double in [0, 1) from the top 53 bits.
  double uniform() noexcept;

  /// Uniform double in [-sqrt(3), sqrt(3)): zero mean, unit variance.
  double unit_variance() noexcept;

  /// Uniform integer in [lo, hi), hi > lo. Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t lo, std::uint64_t hi) noexcept;

 private:
  std::uint64_t state_;
};

}  // namespace tarac
