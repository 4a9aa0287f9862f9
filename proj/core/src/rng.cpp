// SPDX-License-Identifier: Apache-2.0
#include "tarac/rng.hpp"

#include <cmath>

namespace tarac {

double SplitMix64::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double SplitMix64::unit_variance() noexcept {
  static const double kSqrt3 = std::sqrt(3.0);
  return (2.0 * uniform() - 1.0) * kSqrt3;
}

std::uint64_t SplitMix64::below(std::uint64_t lo, std::uint64_t hi) noexcept {
  const std::uint64_t range = hi - lo;
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % range);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return lo + x % range;
}

}  // namespace tarac
