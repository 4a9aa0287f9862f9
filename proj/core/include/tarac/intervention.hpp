// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tarac/attention_math.hpp"
#include "tarac/transformer.hpp"

namespace tarac {

/// Zero-based, half-open layer interval [lo, hi). "10:16" covers layers 10..15.
struct LayerRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  [[nodiscard]] constexpr bool contains(std::size_t layer) const noexcept {
    return layer >= lo && layer < hi;
  }
  [[nodiscard]] constexpr std::size_t size() const noexcept { return hi > lo ? hi - lo : 0; }

  friend constexpr bool operator==(const LayerRange&, const LayerRange&) = default;
};

/// Parses "lo:hi". Throws std::invalid_argument on malformed input or lo > hi.
[[nodiscard]] LayerRange parse_layer_range(std::string_view text);
[[nodiscard]] std::string to_string(LayerRange range);

enum class UpdateRule {
  ema,               // A_t = alpha * a_t + (1 - alpha) * A_{t-1}
  two_step_literal,  // A_t = alpha * a_t + (1 - alpha) * a_{t-1}
};

struct TaracConfig {
  double alpha = 0.5;
  double beta = 0.5;
  LayerRange layers{2, 6};
  HeadReducer head_reducer = HeadReducer::max;
  RenormMode renorm_mode = RenormMode::rowsum;
  UpdateRule update_rule = UpdateRule::ema;

  /// Throws std::invalid_argument if alpha is outside [0, 1], beta < 0 or the
  /// layer range exceeds n_layers.
  void validate(std::size_t n_layers) const;

  /// Non-fatal advisories (currently: beta above 2 tends to cause repetition).
  [[nodiscard]] std::vector<std::string> warnings() const;
};

/// Per-layer accumulated image attention for one generation session.
/// Only layers inside the configured range own storage.
class AccumulatedAttention {
 public:
  AccumulatedAttention() = default;
  AccumulatedAttention(LayerRange layers, std::size_t n_image);

  [[nodiscard]] LayerRange layers() const noexcept { return layers_; }
  [[nodiscard]] std::size_t n_image() const noexcept { return n_image_; }
  [[nodiscard]] bool holds(std::size_t layer) const noexcept;

  /// Number of positions folded into `layer` since the last reset.
  [[nodiscard]] std::size_t step(std::size_t layer) const;
  [[nodiscard]] std::span<const double> accumulated(std::size_t layer) const;
  [[nodiscard]] std::span<const double> previous_capture(std::size_t layer) const;

  /// Clears every layer back to t = 0.
  void reset();

  /// Bytes owned by the accumulated and previous-capture vectors.
  [[nodiscard]] std::size_t memory_bytes() const noexcept;

  /// |layers| x N_i x 2 vectors x sizeof(double).
  [[nodiscard]] static std::size_t analytic_bytes(LayerRange layers, std::size_t n_image) noexcept;

 private:
  struct Slot {
    std::vector<double> accumulated;
    std::vector<double> previous;
    std::size_t t = 0;
  };

  Slot& slot(std::size_t layer);
  [[nodiscard]] const Slot& slot(std::size_t layer) const;

  friend void update_accumulated(AccumulatedAttention&, std::size_t, std::span<const double>,
                                 double, UpdateRule);

  LayerRange layers_;
  std::size_t n_image_ = 0;
  std::vector<Slot> slots_;
};

/// Head-reduced copy of the image slice of `row`; `row` is left untouched.
[[nodiscard]] std::vector<double> capture_image_attention(const AttentionRow& row, ImageSpan span,
                                                          HeadReducer reducer);

/// Folds a freshly captured vector into `layer`'s state and advances its step.
void update_accumulated(AccumulatedAttention& state, std::size_t layer,
                        std::span<const double> captured, double alpha, UpdateRule rule);

/// Adds beta * accumulated to every head's image slice. No renormalization.
void inject_accumulated(AttentionRow& row, std::span<const double> accumulated, double beta,
                        ImageSpan span);

/// capture -> update -> inject -> renormalize for one layer. Identity (and no
/// state change) when the layer is outside the range or the span is empty.
void apply_layer_intervention(std::size_t layer, AttentionRow& row, AccumulatedAttention& state,
                              const TaracConfig& cfg, ImageSpan span);

/// Owns config and state for one session and exposes the pipeline as a hook.
class TaracIntervention {
 public:
  /// `span` sizes the state; hook calls must carry a span of the same length.
  TaracIntervention(TaracConfig cfg, ImageSpan span);

  void operator()(const HookSite& site, AttentionRow& row);

  /// Returns a hook bound to this object; the object must outlive the hook.
  [[nodiscard]] AttentionHook hook();

  void reset() { state_.reset(); }

  [[nodiscard]] const TaracConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const AccumulatedAttention& state() const noexcept { return state_; }

 private:
  TaracConfig cfg_;
  AccumulatedAttention state_;
};

}  // namespace tarac
