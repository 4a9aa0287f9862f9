// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tarac {

/// Half-open, zero-based range [start, end) of image-token positions.
struct ImageSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  [[nodiscard]] constexpr std::size_t size() const noexcept { return end - start; }
  [[nodiscard]] constexpr bool empty() const noexcept { return end == start; }

  friend constexpr bool operator==(const ImageSpan&, const ImageSpan&) = default;
};

enum class HeadReducer { max, mean };

enum class RenormMode {
  rowsum,
  // Re-applies softmax to the modified row. Flattens the distribution toward
  // uniform; kept for tests and analysis, never used on the default path.
  softmax_diagnostic,
};

/// Attention of one query position, H heads by N_t key positions, row-major.
class AttentionRow {
 public:
  AttentionRow() = default;
  AttentionRow(std::size_t heads, std::size_t positions, double fill = 0.0);

  /// Builds a row from per-head vectors; all heads must have the same length.
  static AttentionRow from_heads(const std::vector<std::vector<double>>& heads);

  [[nodiscard]] std::size_t heads() const noexcept { return heads_; }
  [[nodiscard]] std::size_t positions() const noexcept { return positions_; }

  [[nodiscard]] std::span<double> head(std::size_t h);
  [[nodiscard]] std::span<const double> head(std::size_t h) const;

  [[nodiscard]] double& at(std::size_t h, std::size_t pos) { return weights_[h * positions_ + pos]; }
  [[nodiscard]] double at(std::size_t h, std::size_t pos) const {
    return weights_[h * positions_ + pos];
  }

  /// Copy of the columns [span.start, span.end) for every head.
  [[nodiscard]] AttentionRow slice(ImageSpan span) const;

  [[nodiscard]] std::span<const double> data() const noexcept { return weights_; }

  friend bool operator==(const AttentionRow&, const AttentionRow&) = default;

 private:
  std::size_t heads_ = 0;
  std::size_t positions_ = 0;
  std::vector<double> weights_;
};

/// Numerically stable softmax (max-subtracted, f64 sum).
[[nodiscard]] std::vector<double> softmax_row(std::span<const double> scores);

/// In-place variant used on the decode path. Same preconditions and errors.
void softmax_inplace(std::span<double> scores);

/// Scaled dot-product attention of one query against the cached keys.
/// `keys` holds N_t rows of query.size() values each, row-major.
[[nodiscard]] std::vector<double> causal_attention_row(std::span<const double> query,
                                                       std::span<const double> keys,
                                                       double scale);

/// Elementwise max or mean across the head axis; output has row.positions() entries.
[[nodiscard]] std::vector<double> reduce_heads(const AttentionRow& row, HeadReducer mode);

/// Normalizes every head of `row` independently.
void renormalize_last_row(AttentionRow& row, RenormMode mode);

/// Attention mass a single head places on the positions in `span`.
[[nodiscard]] double image_mass(std::span<const double> row, ImageSpan span);

/// image_mass averaged over heads.
[[nodiscard]] double mean_image_mass(const AttentionRow& row, ImageSpan span);

}  // namespace tarac
