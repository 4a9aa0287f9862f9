// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace tarac {

using TokenId = std::uint32_t;

struct ModelConfig {
  std::size_t n_layers = 8;
  std::size_t n_heads = 8;
  std::size_t d_model = 256;
  std::size_t d_head = 32;
  std::size_t vocab_size = 1024;
  std::size_t max_seq_len = 256;
  std::uint64_t seed = 0;

  // Reserved ids. Ids in [image_base(), vocab_size) are image tokens whose
  // embeddings come from a separate random stream; text ids live in
  // [first_text_token, image_base()). 0 selects vocab_size / 2.
  TokenId end_token = 0;
  TokenId bos_token = 1;
  TokenId image_token_base = 0;

  static constexpr TokenId first_text_token = 2;

  [[nodiscard]] std::size_t d_ff() const noexcept { return 4 * d_model; }
  [[nodiscard]] TokenId image_base() const noexcept {
    return image_token_base != 0 ? image_token_base : static_cast<TokenId>(vocab_size / 2);
  }

  /// Throws std::invalid_argument naming the violated constraint.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Row-major f32 matrix, `rows` outputs by `cols` inputs.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  [[nodiscard]] std::span<const float> row(std::size_t r) const {
    return std::span<const float>(data).subspan(r * cols, cols);
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct LayerWeights {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Matrix ffn_up;          // d_ff x d_model
  Matrix ffn_down;        // d_model x d_ff
  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct Weights {
  ModelConfig config;
  Matrix token_embedding;     // vocab x d_model
  Matrix position_embedding;  // max_seq_len x d_model
  std::vector<LayerWeights> layers;
  Matrix lm_head;             // vocab x d_model

  [[nodiscard]] std::size_t parameter_count() const;
  friend bool operator==(const Weights&, const Weights&) = default;
};

/// Deterministic initialization; every entry is
/// SplitMix64::unit_variance() / sqrt(d_model) drawn from a per-tensor stream.
[[nodiscard]] Weights init_weights(const ModelConfig& config);

// Weight file layout (all integers little-endian):
//   "TTWT" | u16 version | u32 header_len | header (UTF-8 JSON) | f32 payloads
// The header holds {"config": {...}, "tensors": [{"name", "shape"}, ...]} and
// the payloads follow in the listed order.
inline constexpr std::uint16_t kWeightFormatVersion = 1;

void save_weights(const Weights& weights, const std::filesystem::path& path);
[[nodiscard]] Weights load_weights(const std::filesystem::path& path);

}  // namespace tarac
