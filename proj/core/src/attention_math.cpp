// SPDX-License-Identifier: Apache-2.0
#include "tarac/attention_math.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tarac {

AttentionRow::AttentionRow(std::size_t heads, std::size_t positions, double fill)
    : heads_(heads), positions_(positions), weights_(heads * positions, fill) {}

AttentionRow AttentionRow::from_heads(const std::vector<std::vector<double>>& heads) {
  const std::size_t n = heads.empty() ? 0 : heads.front().size();
  AttentionRow row(heads.size(), n);
  for (std::size_t h = 0; h < heads.size(); ++h) {
    if (heads[h].size() != n) {
      throw std::invalid_argument("attention heads differ in length");
    }
    std::copy(heads[h].begin(), heads[h].end(), row.head(h).begin());
  }
  return row;
}

std::span<double> AttentionRow::head(std::size_t h) {
  return std::span<double>(weights_).subspan(h * positions_, positions_);
}

std::span<const double> AttentionRow::head(std::size_t h) const {
  return std::span<const double>(weights_).subspan(h * positions_, positions_);
}

AttentionRow AttentionRow::slice(ImageSpan span) const {
  if (span.start > span.end || span.end > positions_) {
    throw std::out_of_range("image span out of bounds");
  }
  AttentionRow out(heads_, span.size());
  for (std::size_t h = 0; h < heads_; ++h) {
    auto src = head(h).subspan(span.start, span.size());
    std::copy(src.begin(), src.end(), out.head(h).begin());
  }
  return out;
}

void softmax_inplace(std::span<double> scores) {
  if (scores.empty()) {
    throw std::invalid_argument("empty row");
  }
  double max_score = scores.front();
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw std::invalid_argument("non-finite score");
    }
    max_score = std::max(max_score, s);
  }
  double sum = 0.0;
  for (double& s : scores) {
    s = std::exp(s - max_score);
    sum += s;
  }
  const double inv = 1.0 / sum;
  for (double& s : scores) {
    s *= inv;
  }
}

std::vector<double> softmax_row(std::span<const double> scores) {
  std::vector<double> out(scores.begin(), scores.end());
  softmax_inplace(out);
  return out;
}

std::vector<double> causal_attention_row(std::span<const double> query,
                                         std::span<const double> keys, double scale) {
  const std::size_t d = query.size();
  if (d == 0 || keys.empty() || keys.size() % d != 0) {
    throw std::invalid_argument("query/key dimension mismatch");
  }
  const std::size_t n = keys.size() / d;
  std::vector<double> scores(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double* k = keys.data() + j * d;
    double dot = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      dot += query[i] * k[i];
    }
    scores[j] = dot * scale;
  }
  softmax_inplace(scores);
  return scores;
}

std::vector<double> reduce_heads(const AttentionRow& row, HeadReducer mode) {
  if (row.heads() == 0) {
    throw std::invalid_argument("reduce_heads needs at least one head");
  }
  std::vector<double> out(row.head(0).begin(), row.head(0).end());
  for (std::size_t h = 1; h < row.heads(); ++h) {
    auto src = row.head(h);
    if (mode == HeadReducer::max) {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(out[i], src[i]);
    } else {
      for (std::size_t i = 0; i < out.size(); ++i) out[i] += src[i];
    }
  }
  if (mode == HeadReducer::mean && row.heads() > 1) {
    const double inv = 1.0 / static_cast<double>(row.heads());
    for (double& v : out) v *= inv;
  }
  return out;
}

void renormalize_last_row(AttentionRow& row, RenormMode mode) {
  for (std::size_t h = 0; h < row.heads(); ++h) {
    auto w = row.head(h);
    if (mode == RenormMode::softmax_diagnostic) {
      softmax_inplace(w);
      continue;
    }
    double sum = 0.0;
    for (double v : w) sum += v;
    if (!(sum > 0.0)) {
      throw std::domain_error("zero attention mass");
    }
    for (double& v : w) v /= sum;
  }
}

double image_mass(std::span<const double> row, ImageSpan span) {
  if (span.start > span.end || span.end > row.size()) {
    throw std::out_of_range("image span out of bounds");
  }
  double mass = 0.0;
  for (std::size_t i = span.start; i < span.end; ++i) mass += row[i];
  return mass;
}

double mean_image_mass(const AttentionRow& row, ImageSpan span) {
  if (row.heads() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t h = 0; h < row.heads(); ++h) total += image_mass(row.head(h), span);
  return total / static_cast<double>(row.heads());
}

}  // namespace tarac
