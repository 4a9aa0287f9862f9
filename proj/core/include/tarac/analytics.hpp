// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "tarac/trace.hpp"

namespace tarac {

/// Per generated step (ascending), the mean over recorded layers of the
/// head-mean image mass. Records must belong to a single run.
[[nodiscard]] std::vector<double> visual_attention_series(std::span<const TraceRecord> records);

/// Mean per-image-token attention across every record's profile.
/// Throws std::runtime_error("profile not recorded") if any record lacks one.
[[nodiscard]] std::vector<double> image_token_profile(std::span<const TraceRecord> records);

/// Elementwise `lhs - rhs`; the two profiles must have equal length.
[[nodiscard]] std::vector<double> profile_difference(std::span<const double> lhs,
                                                     std::span<const double> rhs);

struct ScottBandwidth {};
struct FixedBandwidth {
  double h = 1.0;
};
using Bandwidth = std::variant<ScottBandwidth, FixedBandwidth>;

/// Gaussian kernel density estimate f(x) = 1/(n h) sum phi((x - x_i) / h).
class GaussianKde {
 public:
  /// Scott's rule uses h = sd * n^(-1/5) with the (n - 1) sample standard
  /// deviation; zero spread falls back to h = 1e-3 and sets used_fallback().
  GaussianKde(std::vector<double> samples, Bandwidth bandwidth = ScottBandwidth{});

  [[nodiscard]] double operator()(double x) const noexcept;
  [[nodiscard]] std::vector<double> evaluate(std::span<const double> xs) const;

  [[nodiscard]] double bandwidth() const noexcept { return h_; }
  [[nodiscard]] bool used_fallback() const noexcept { return fallback_; }
  [[nodiscard]] std::span<const double> samples() const noexcept { return samples_; }
  [[nodiscard]] double min_sample() const noexcept;
  [[nodiscard]] double max_sample() const noexcept;

  /// `points` evenly spaced values over [min - pad*h, max + pad*h].
  [[nodiscard]] std::vector<double> grid(std::size_t points, double pad = 6.0) const;

 private:
  std::vector<double> samples_;
  double h_ = 1.0;
  bool fallback_ = false;
};

enum class TokenClass { correct, hallucinated };

struct LabeledToken {
  std::size_t step = 0;  // 1-based, matching trace steps
  std::string word;
  TokenClass label = TokenClass::correct;
  bool multi_token = false;

  friend bool operator==(const LabeledToken&, const LabeledToken&) = default;
};

/// Keeps the earliest-step entry per word and drops multi-token words. Output
/// preserves input order.
[[nodiscard]] std::vector<LabeledToken> first_occurrence_filter(std::span<const LabeledToken> labels);

/// Reads `step,word,class,multi_token` lines; a first line starting with
/// "step" is treated as a column header. `class` is correct|hallucinated.
[[nodiscard]] std::vector<LabeledToken> read_labels(const std::filesystem::path& path);

struct ClassDensities {
  // Empty when the class has no samples.
  std::optional<GaussianKde> correct_attention;
  std::optional<GaussianKde> hallucinated_attention;
  std::optional<GaussianKde> correct_position;
  std::optional<GaussianKde> hallucinated_position;
  std::size_t correct_count = 0;
  std::size_t hallucinated_count = 0;
};

/// Joins labels to the visual attention series at their step and fits one
/// KDE per class over attention values and over step positions.
[[nodiscard]] ClassDensities class_attention_densities(std::span<const double> series,
                                                       std::span<const LabeledToken> labels,
                                                       bool first_occurrence_only,
                                                       Bandwidth bandwidth = ScottBandwidth{});

}  // namespace tarac
