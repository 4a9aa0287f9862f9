// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "tarac/attention_math.hpp"
#include "tarac/model.hpp"

namespace tarac {

/// Where an attention hook fires: one call per layer per hooked position.
struct HookSite {
  std::size_t layer = 0;
  std::size_t step = 0;  // 1 for the first generated token (the final prefill position)
  ImageSpan span;
};

/// Receives the current position's post-softmax row before value mixing and
/// may modify it in place.
using AttentionHook = std::function<void(const HookSite&, AttentionRow&)>;

/// Per-call context for prefill/forward_token. An empty hook means no intervention.
struct StepContext {
  ImageSpan span;
  std::size_t step = 1;
  AttentionHook hook;
};

/// Keys and values for every processed position, stored per layer and head.
/// Capacity is fixed at max_seq_len at construction.
class KvCache {
 public:
  explicit KvCache(const ModelConfig& config);

  [[nodiscard]] std::size_t length() const noexcept { return length_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t layers() const noexcept { return keys_.size(); }

  /// Keys of positions [0, count) for one head, count x d_head row-major.
  [[nodiscard]] std::span<const double> keys(std::size_t layer, std::size_t head,
                                             std::size_t count) const;
  [[nodiscard]] std::span<const double> values(std::size_t layer, std::size_t head,
                                               std::size_t count) const;

  /// Writes the d_model-wide key/value of `pos` for one layer (heads concatenated).
  void store(std::size_t layer, std::size_t pos, std::span<const double> key,
             std::span<const double> value);

  /// Marks `count` more positions as cached in every layer.
  void commit(std::size_t count);

  [[nodiscard]] std::size_t memory_bytes() const noexcept;

 private:
  std::size_t n_heads_;
  std::size_t d_head_;
  std::size_t capacity_;
  std::size_t length_ = 0;
  // [layer][head][pos][d_head]
  std::vector<std::vector<double>> keys_;
  std::vector<std::vector<double>> values_;
};

struct ForwardOutput {
  std::vector<double> logits;
  std::vector<AttentionRow> rows;  // per layer, as used for value mixing (post-hook)
};

struct PrefillOutput {
  KvCache cache;
  std::vector<double> logits;
  std::vector<AttentionRow> rows;  // final position, per layer, post-hook
};

/// Runs the whole prompt layer by layer, filling the cache. The hook fires only
/// for the final position, once per layer, with `ctx.step`.
[[nodiscard]] PrefillOutput prefill(const Weights& weights, std::span<const TokenId> tokens,
                                    const StepContext& ctx = {});

/// Processes one new position against the cache and appends its key/value.
[[nodiscard]] ForwardOutput forward_token(const Weights& weights, KvCache& cache, TokenId token,
                                          const StepContext& ctx = {});

}  // namespace tarac
