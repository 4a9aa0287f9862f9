// SPDX-License-Identifier: Apache-2.0
#include "tarac/intervention.hpp"

#include <charconv>
#include <sstream>
#include <stdexcept>

namespace tarac {
namespace {

std::size_t parse_index(std::string_view text, std::string_view whole) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (text.empty() || ec != std::errc{} || ptr != end) {
    throw std::invalid_argument("invalid layer range '" + std::string(whole) + "'");
  }
  return value;
}

}  // namespace

LayerRange parse_layer_range(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw std::invalid_argument("invalid layer range '" + std::string(text) + "', expected lo:hi");
  }
  LayerRange r{parse_index(text.substr(0, colon), text), parse_index(text.substr(colon + 1), text)};
  if (r.lo > r.hi) {
    throw std::invalid_argument("invalid layer range '" + std::string(text) + "': lo > hi");
  }
  return r;
}

std::string to_string(LayerRange range) {
  return std::to_string(range.lo) + ":" + std::to_string(range.hi);
}

void TaracConfig::validate(std::size_t n_layers) const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(beta >= 0.0)) throw std::invalid_argument("beta must be >= 0");
  if (layers.lo > layers.hi || layers.hi > n_layers) {
    throw std::invalid_argument("layer range " + to_string(layers) + " exceeds " +
                                std::to_string(n_layers) + " layers");
  }
}

std::vector<std::string> TaracConfig::warnings() const {
  std::vector<std::string> out;
  if (beta > 2.0) {
    std::ostringstream msg;
    msg << "beta = " << beta
        << " is large; injected attention may dominate and cause repetitive generation";
    out.push_back(msg.str());
  }
  return out;
}

AccumulatedAttention::AccumulatedAttention(LayerRange layers, std::size_t n_image)
    : layers_(layers), n_image_(n_image) {
  if (n_image_ == 0) return;  // nothing to accumulate over
  slots_.resize(layers_.size());
  for (auto& s : slots_) {
    s.accumulated.reserve(n_image_);
    s.previous.reserve(n_image_);
  }
}

bool AccumulatedAttention::holds(std::size_t layer) const noexcept {
  return !slots_.empty() && layers_.contains(layer);
}

AccumulatedAttention::Slot& AccumulatedAttention::slot(std::size_t layer) {
  if (!holds(layer)) {
    throw std::out_of_range("layer " + std::to_string(layer) + " holds no accumulated state");
  }
  return slots_[layer - layers_.lo];
}

const AccumulatedAttention::Slot& AccumulatedAttention::slot(std::size_t layer) const {
  if (!holds(layer)) {
    throw std::out_of_range("layer " + std::to_string(layer) + " holds no accumulated state");
  }
  return slots_[layer - layers_.lo];
}

std::size_t AccumulatedAttention::step(std::size_t layer) const {
  return holds(layer) ? slot(layer).t : 0;
}

std::span<const double> AccumulatedAttention::accumulated(std::size_t layer) const {
  return slot(layer).accumulated;
}

std::span<const double> AccumulatedAttention::previous_capture(std::size_t layer) const {
  return slot(layer).previous;
}

void AccumulatedAttention::reset() {
  for (auto& s : slots_) {
    s.accumulated.clear();
    s.previous.clear();
    s.t = 0;
  }
}

std::size_t AccumulatedAttention::memory_bytes() const noexcept {
  std::size_t n = 0;
  for (const auto& s : slots_) n += s.accumulated.capacity() + s.previous.capacity();
  return n * sizeof(double);
}

std::size_t AccumulatedAttention::analytic_bytes(LayerRange layers, std::size_t n_image) noexcept {
  return layers.size() * n_image * 2 * sizeof(double);
}

std::vector<double> capture_image_attention(const AttentionRow& row, ImageSpan span,
                                            HeadReducer reducer) {
  return reduce_heads(row.slice(span), reducer);
}

void update_accumulated(AccumulatedAttention& state, std::size_t layer,
                        std::span<const double> captured, double alpha, UpdateRule rule) {
  auto& s = state.slot(layer);
  if (captured.size() != state.n_image_) {
    throw std::invalid_argument("captured attention length does not match image span");
  }
  if (s.t == 0) {
    s.accumulated.assign(captured.begin(), captured.end());
  } else {
    const auto& history = rule == UpdateRule::ema ? s.accumulated : s.previous;
    for (std::size_t i = 0; i < captured.size(); ++i) {
      s.accumulated[i] = alpha * captured[i] + (1.0 - alpha) * history[i];
    }
  }
  s.previous.assign(captured.begin(), captured.end());
  ++s.t;
}

void inject_accumulated(AttentionRow& row, std::span<const double> accumulated, double beta,
                        ImageSpan span) {
  if (accumulated.size() != span.size()) {
    throw std::invalid_argument("accumulated attention length does not match image span");
  }
  if (span.end > row.positions()) throw std::out_of_range("image span out of bounds");
  if (beta == 0.0) return;
  for (std::size_t h = 0; h < row.heads(); ++h) {
    auto slice = row.head(h).subspan(span.start, span.size());
    for (std::size_t i = 0; i < slice.size(); ++i) slice[i] += beta * accumulated[i];
  }
}

void apply_layer_intervention(std::size_t layer, AttentionRow& row, AccumulatedAttention& state,
                              const TaracConfig& cfg, ImageSpan span) {
  if (!cfg.layers.contains(layer) || span.empty()) return;
  const auto captured = capture_image_attention(row, span, cfg.head_reducer);
  update_accumulated(state, layer, captured, cfg.alpha, cfg.update_rule);
  inject_accumulated(row, state.accumulated(layer), cfg.beta, span);
  renormalize_last_row(row, cfg.renorm_mode);
}

TaracIntervention::TaracIntervention(TaracConfig cfg, ImageSpan span)
    : cfg_(cfg), state_(cfg.layers, span.size()) {}

void TaracIntervention::operator()(const HookSite& site, AttentionRow& row) {
  apply_layer_intervention(site.layer, row, state_, cfg_, site.span);
}

AttentionHook TaracIntervention::hook() {
  return [this](const HookSite& site, AttentionRow& row) { (*this)(site, row); };
}

}  // namespace tarac
