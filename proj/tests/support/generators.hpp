// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "tarac/attention_math.hpp"

namespace tarac::testing {

// Hand-rolled generators for property tests; every case is reproducible from
// the engine seed.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : engine_(seed) {}

  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
  std::size_t index(std::size_t lo, std::size_t hi) {  // inclusive
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine_);
  }
  bool coin(double p = 0.5) { return std::bernoulli_distribution(p)(engine_); }

  std::vector<double> reals(std::size_t n, double lo, double hi) {
    std::vector<double> v(n);
    for (double& x : v) x = real(lo, hi);
    return v;
  }

  // A probability vector; with `spiky` set a few entries dominate.
  std::vector<double> simplex(std::size_t n, bool spiky = false) {
    std::vector<double> v(n);
    double sum = 0.0;
    for (double& x : v) {
      x = real(1e-6, 1.0);
      if (spiky && coin(0.1)) x *= 50.0;
      sum += x;
    }
    for (double& x : v) x /= sum;
    return v;
  }

  AttentionRow softmax_row(std::size_t heads, std::size_t positions) {
    std::vector<std::vector<double>> hs;
    for (std::size_t h = 0; h < heads; ++h) hs.push_back(simplex(positions, coin()));
    return AttentionRow::from_heads(hs);
  }

  ImageSpan span_within(std::size_t positions) {
    const std::size_t a = index(0, positions);
    const std::size_t b = index(0, positions);
    return a <= b ? ImageSpan{a, b} : ImageSpan{b, a};
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace tarac::testing
