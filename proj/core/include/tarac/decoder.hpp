// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tarac/attention_math.hpp"
#include "tarac/intervention.hpp"
#include "tarac/model.hpp"

namespace tarac {

/// Prompt = [leading tokens (image_offset) | image tokens (n_image) | text tokens (n_prompt)].
struct SequenceLayout {
  std::size_t n_image = 64;
  std::size_t n_prompt = 16;
  std::size_t image_offset = 0;

  [[nodiscard]] ImageSpan image_span() const noexcept {
    return {image_offset, image_offset + n_image};
  }
  [[nodiscard]] std::size_t prompt_length() const noexcept {
    return image_offset + n_image + n_prompt;
  }
  /// Cached length while generating token t (1-based): N_i + N_p + t - 1 plus the offset.
  [[nodiscard]] std::size_t context_length(std::size_t t) const noexcept {
    return prompt_length() + t - 1;
  }
};

/// Synthesizes a prompt: BOS then random text ids for the offset, random image
/// ids for the span, random text ids after. Deterministic in `seed`.
[[nodiscard]] std::vector<TokenId> build_prompt(const ModelConfig& config,
                                                const SequenceLayout& layout, std::uint64_t seed);

struct Sampler {
  enum class Kind { greedy, temperature };
  Kind kind = Kind::greedy;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  static Sampler greedy() { return {}; }
  static Sampler with_temperature(double tau, std::uint64_t seed) {
    return {Kind::temperature, tau, seed};
  }
};

/// Index of the largest logit, lowest index on ties. -inf entries are allowed;
/// all -inf (or NaN/+inf) is an error.
[[nodiscard]] TokenId greedy_pick(std::span<const double> logits);

enum class Termination { max_new_tokens, end_token };

/// Image attention at one recorded layer for one generated token.
struct MassObservation {
  std::size_t step = 0;
  std::size_t layer = 0;
  double mass_before = 0.0;  // head-mean image mass of the raw softmax row
  double mass_after = 0.0;   // same, after the intervention (== before when none applies)
  std::vector<double> profile;  // head-mean attention per image token, post-intervention
};

struct GenerationResult {
  std::vector<TokenId> tokens;
  std::vector<MassObservation> observations;
  std::vector<double> timings;  // seconds per generated token; [0] is the prefill
  std::vector<std::vector<double>> logits;  // only with GenerateOptions::keep_logits
  Termination termination = Termination::max_new_tokens;
  std::size_t cache_bytes = 0;  // KV cache footprint at the end of the run
  std::size_t state_bytes = 0;  // TARAC accumulated-attention footprint (0 without TARAC)

  /// Mean decode-phase time per output token (excludes the prefill token when
  /// more than one token was generated).
  [[nodiscard]] double tpot() const noexcept;
  [[nodiscard]] double mean_mass_after() const noexcept;
  [[nodiscard]] double mean_mass_before() const noexcept;
};

struct GenerateOptions {
  bool record_masses = true;
  bool record_all_layers = false;  // default: the TARAC layer range, or all layers without TARAC
  std::optional<LayerRange> record_layers;  // explicit override
  bool record_profile = false;
  bool keep_logits = false;
};

/// Prefill + autoregressive decode. When `tarac` is set a fresh intervention
/// state is installed as the attention hook.
[[nodiscard]] GenerationResult generate(const Weights& weights, const SequenceLayout& layout,
                                        std::span<const TokenId> prompt,
                                        const std::optional<TaracConfig>& tarac,
                                        std::size_t max_new_tokens,
                                        const Sampler& sampler = Sampler::greedy(),
                                        const GenerateOptions& options = {});

struct CompareReport {
  GenerationResult baseline;
  GenerationResult tarac;
  std::optional<std::size_t> divergence_step;  // 1-based; empty when the token streams match
  double mean_mass_baseline = 0.0;
  double mean_mass_tarac = 0.0;
  [[nodiscard]] double uplift() const noexcept { return mean_mass_tarac - mean_mass_baseline; }
};

/// Baseline and TARAC runs over the same prompt and sampler, recorded on the
/// TARAC layer range. The two arms run on separate threads when `parallel`.
[[nodiscard]] CompareReport compare_runs(const Weights& weights, const SequenceLayout& layout,
                                         std::span<const TokenId> prompt, const TaracConfig& cfg,
                                         std::size_t max_new_tokens,
                                         const Sampler& sampler = Sampler::greedy(),
                                         GenerateOptions options = {}, bool parallel = true);

}  // namespace tarac
