// SPDX-License-Identifier: Apache-2.0
#include "tarac/decoder.hpp"

#include <chrono>
#include <cmath>
#include <future>
#include <limits>
#include <stdexcept>

#include "tarac/rng.hpp"
#include "tarac/transformer.hpp"

namespace tarac {
namespace {

constexpr std::uint64_t kPromptStream = 0x50524F4D;   // "PROM"
constexpr std::uint64_t kSamplerStream = 0x53414D50;  // "SAMP"

TokenId sample_temperature(std::span<const double> logits, double tau, SplitMix64& rng) {
  std::vector<double> scaled(logits.size());
  double max_logit = -std::numeric_limits<double>::infinity();
  for (double l : logits) max_logit = std::max(max_logit, l);
  if (!std::isfinite(max_logit)) throw std::invalid_argument("all logits are -inf");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    scaled[i] = std::exp((logits[i] - max_logit) / tau);
    sum += scaled[i];
  }
  const double u = rng.uniform() * sum;
  double acc = 0.0;
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    acc += scaled[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  // u landed in rounding slack past the last nonzero bucket
  for (std::size_t i = scaled.size(); i-- > 0;) {
    if (scaled[i] > 0.0) return static_cast<TokenId>(i);
  }
  return 0;
}

std::vector<double> head_mean_profile(const AttentionRow& row, ImageSpan span) {
  std::vector<double> profile(span.size(), 0.0);
  for (std::size_t h = 0; h < row.heads(); ++h) {
    auto w = row.head(h);
    for (std::size_t i = 0; i < span.size(); ++i) profile[i] += w[span.start + i];
  }
  for (double& p : profile) p /= static_cast<double>(row.heads());
  return profile;
}

double mean_of(const std::vector<MassObservation>& obs, double MassObservation::*field) {
  if (obs.empty()) return 0.0;
  double s = 0.0;
  for (const auto& o : obs) s += o.*field;
  return s / static_cast<double>(obs.size());
}

}  // namespace

std::vector<TokenId> build_prompt(const ModelConfig& config, const SequenceLayout& layout,
                                  std::uint64_t seed) {
  const TokenId image_base = config.image_base();
  const bool need_text = layout.n_prompt > 0 || layout.image_offset > 1;
  if (need_text && image_base <= ModelConfig::first_text_token) {
    throw std::invalid_argument("vocabulary has no text token range");
  }
  if (layout.n_image > 0 && image_base >= config.vocab_size) {
    throw std::invalid_argument("vocabulary has no image token range");
  }

  auto rng = SplitMix64::stream(seed, kPromptStream);
  auto text_id = [&] {
    return static_cast<TokenId>(rng.below(ModelConfig::first_text_token, image_base));
  };
  std::vector<TokenId> tokens;
  tokens.reserve(layout.prompt_length());
  for (std::size_t i = 0; i < layout.image_offset; ++i) {
    tokens.push_back(i == 0 ? config.bos_token : text_id());
  }
  for (std::size_t i = 0; i < layout.n_image; ++i) {
    tokens.push_back(static_cast<TokenId>(rng.below(image_base, config.vocab_size)));
  }
  for (std::size_t i = 0; i < layout.n_prompt; ++i) tokens.push_back(text_id());
  return tokens;
}

TokenId greedy_pick(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("empty logits");
  std::size_t best = logits.size();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double v = logits[i];
    if (std::isnan(v) || v == std::numeric_limits<double>::infinity()) {
      throw std::invalid_argument("non-finite logit");
    }
    if (v == -std::numeric_limits<double>::infinity()) continue;
    if (best == logits.size() || v > logits[best]) best = i;
  }
  if (best == logits.size()) throw std::invalid_argument("all logits are -inf");
  return static_cast<TokenId>(best);
}

double GenerationResult::tpot() const noexcept {
  if (timings.empty()) return 0.0;
  if (timings.size() == 1) return timings.front();
  double s = 0.0;
  for (std::size_t i = 1; i < timings.size(); ++i) s += timings[i];
  return s / static_cast<double>(timings.size() - 1);
}

double GenerationResult::mean_mass_after() const noexcept {
  return mean_of(observations, &MassObservation::mass_after);
}

double GenerationResult::mean_mass_before() const noexcept {
  return mean_of(observations, &MassObservation::mass_before);
}

GenerationResult generate(const Weights& weights, const SequenceLayout& layout,
                          std::span<const TokenId> prompt, const std::optional<TaracConfig>& tarac,
                          std::size_t max_new_tokens, const Sampler& sampler,
                          const GenerateOptions& options) {
  const ModelConfig& c = weights.config;
  if (prompt.empty()) throw std::invalid_argument("empty prompt");
  const ImageSpan span = layout.image_span();
  if (span.end > prompt.size()) throw std::invalid_argument("image span exceeds prompt");
  if (tarac) tarac->validate(c.n_layers);
  if (sampler.kind == Sampler::Kind::temperature && !(sampler.temperature > 0.0)) {
    throw std::invalid_argument("temperature must be > 0");
  }
  if (max_new_tokens > 0 && prompt.size() + max_new_tokens - 1 > c.max_seq_len) {
    throw std::length_error("prompt + max_new_tokens exceeds max_seq_len");
  }

  GenerationResult result;
  if (max_new_tokens == 0) return result;

  std::optional<TaracIntervention> intervention;
  if (tarac) intervention.emplace(*tarac, span);

  LayerRange record{0, c.n_layers};
  if (options.record_layers) {
    record = *options.record_layers;
  } else if (!options.record_all_layers && tarac) {
    record = tarac->layers;
  }

  AttentionHook hook;
  if (options.record_masses) {
    hook = [&](const HookSite& site, AttentionRow& row) {
      if (!record.contains(site.layer)) {
        if (intervention) (*intervention)(site, row);
        return;
      }
      MassObservation obs;
      obs.step = site.step;
      obs.layer = site.layer;
      obs.mass_before = mean_image_mass(row, site.span);
      if (intervention) (*intervention)(site, row);
      obs.mass_after = mean_image_mass(row, site.span);
      if (options.record_profile) obs.profile = head_mean_profile(row, site.span);
      result.observations.push_back(std::move(obs));
    };
  } else if (intervention) {
    hook = intervention->hook();
  }

  auto rng = SplitMix64::stream(sampler.seed, kSamplerStream);
  auto pick = [&](const std::vector<double>& logits) {
    if (options.keep_logits) result.logits.push_back(logits);
    return sampler.kind == Sampler::Kind::greedy ? greedy_pick(logits)
                                                 : sample_temperature(logits, sampler.temperature, rng);
  };

  using Clock = std::chrono::steady_clock;
  auto t0 = Clock::now();
  auto pre = prefill(weights, prompt, StepContext{span, 1, hook});
  TokenId token = pick(pre.logits);
  result.timings.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
  result.tokens.push_back(token);
  KvCache cache = std::move(pre.cache);

  for (std::size_t t = 2; t <= max_new_tokens; ++t) {
    if (token == c.end_token) break;
    t0 = Clock::now();
    auto out = forward_token(weights, cache, token, StepContext{span, t, hook});
    token = pick(out.logits);
    result.timings.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    result.tokens.push_back(token);
  }
  result.termination = token == c.end_token ? Termination::end_token : Termination::max_new_tokens;
  result.cache_bytes = cache.memory_bytes();
  if (intervention) result.state_bytes = intervention->state().memory_bytes();
  return result;
}

CompareReport compare_runs(const Weights& weights, const SequenceLayout& layout,
                           std::span<const TokenId> prompt, const TaracConfig& cfg,
                           std::size_t max_new_tokens, const Sampler& sampler,
                           GenerateOptions options, bool parallel) {
  if (!options.record_layers && !options.record_all_layers) options.record_layers = cfg.layers;

  auto run_baseline = [&] {
    return generate(weights, layout, prompt, std::nullopt, max_new_tokens, sampler, options);
  };
  CompareReport report;
  if (parallel) {
    auto baseline = std::async(std::launch::async, run_baseline);
    report.tarac = generate(weights, layout, prompt, cfg, max_new_tokens, sampler, options);
    report.baseline = baseline.get();
  } else {
    report.baseline = run_baseline();
    report.tarac = generate(weights, layout, prompt, cfg, max_new_tokens, sampler, options);
  }

  const auto& a = report.baseline.tokens;
  const auto& b = report.tarac.tokens;
  const std::size_t common = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < common; ++i) {
    if (a[i] != b[i]) {
      report.divergence_step = i + 1;
      break;
    }
  }
  if (!report.divergence_step && a.size() != b.size()) report.divergence_step = common + 1;

  report.mean_mass_baseline = report.baseline.mean_mass_after();
  report.mean_mass_tarac = report.tarac.mean_mass_after();
  return report;
}

}  // namespace tarac
