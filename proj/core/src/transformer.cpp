// SPDX-License-Identifier: Apache-2.0
#include "tarac/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tarac {
namespace {

constexpr double kLayerNormEps = 1e-5;

void matvec(const Matrix& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const float* row = w.data.data() + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += static_cast<double>(row[c]) * x[c];
    y[r] = acc;
  }
}

// y += W x
void matvec_add(const Matrix& w, std::span<const double> x, std::span<double> y) {
  for (std::size_t r = 0; r < w.rows; ++r) {
    const float* row = w.data.data() + r * w.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < w.cols; ++c) acc += static_cast<double>(row[c]) * x[c];
    y[r] += acc;
  }
}

// Parameter-free LayerNorm.
void layer_norm(std::span<const double> x, std::span<double> y) {
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mean) * inv;
}

double gelu(double x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(kC * (x + 0.044715 * x * x * x)));
}

void embed(const Weights& w, TokenId token, std::size_t pos, std::span<double> x) {
  if (token >= w.config.vocab_size) {
    throw std::out_of_range("token id outside vocabulary");
  }
  auto te = w.token_embedding.row(token);
  auto pe = w.position_embedding.row(pos);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = static_cast<double>(te[i]) + static_cast<double>(pe[i]);
  }
}

// Scratch buffers for one position.
struct Scratch {
  explicit Scratch(const ModelConfig& c)
      : normed(c.d_model), q(c.d_model), k(c.d_model), v(c.d_model), mixed(c.d_model),
        hidden(c.d_ff()) {}
  std::vector<double> normed, q, k, v, mixed, hidden;
};

// Attention of query `q` at position `pos` over cached positions [0, pos].
AttentionRow attention_row(const KvCache& cache, const ModelConfig& c, std::size_t layer,
                           std::span<const double> q, std::size_t pos) {
  const std::size_t n = pos + 1;
  const double scale = 1.0 / std::sqrt(static_cast<double>(c.d_head));
  AttentionRow row(c.n_heads, n);
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    auto keys = cache.keys(layer, h, n);
    auto qh = q.subspan(h * c.d_head, c.d_head);
    auto out = row.head(h);
    for (std::size_t j = 0; j < n; ++j) {
      const double* kj = keys.data() + j * c.d_head;
      double dot = 0.0;
      for (std::size_t i = 0; i < c.d_head; ++i) dot += qh[i] * kj[i];
      out[j] = dot * scale;
    }
    softmax_inplace(out);
  }
  return row;
}

void mix_values(const KvCache& cache, const ModelConfig& c, std::size_t layer,
                const AttentionRow& row, std::span<double> out) {
  const std::size_t n = row.positions();
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    auto values = cache.values(layer, h, n);
    auto weights = row.head(h);
    auto oh = out.subspan(h * c.d_head, c.d_head);
    std::fill(oh.begin(), oh.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = weights[j];
      const double* vj = values.data() + j * c.d_head;
      for (std::size_t i = 0; i < c.d_head; ++i) oh[i] += a * vj[i];
    }
  }
}

void feed_forward(const LayerWeights& lw, Scratch& s, std::span<double> x) {
  layer_norm(x, s.normed);
  matvec(lw.ffn_up, s.normed, s.hidden);
  for (double& h : s.hidden) h = gelu(h);
  matvec_add(lw.ffn_down, s.hidden, x);
}

std::vector<double> final_logits(const Weights& w, Scratch& s, std::span<const double> x) {
  layer_norm(x, s.normed);
  std::vector<double> logits(w.config.vocab_size);
  matvec(w.lm_head, s.normed, logits);
  return logits;
}

void run_hook(const StepContext& ctx, std::size_t layer, AttentionRow& row) {
  if (ctx.hook) ctx.hook(HookSite{layer, ctx.step, ctx.span}, row);
}

}  // namespace

KvCache::KvCache(const ModelConfig& config)
    : n_heads_(config.n_heads), d_head_(config.d_head), capacity_(config.max_seq_len) {
  const std::size_t per_layer = n_heads_ * capacity_ * d_head_;
  keys_.assign(config.n_layers, std::vector<double>(per_layer, 0.0));
  values_.assign(config.n_layers, std::vector<double>(per_layer, 0.0));
}

std::span<const double> KvCache::keys(std::size_t layer, std::size_t head,
                                      std::size_t count) const {
  return std::span<const double>(keys_[layer]).subspan(head * capacity_ * d_head_, count * d_head_);
}

std::span<const double> KvCache::values(std::size_t layer, std::size_t head,
                                        std::size_t count) const {
  return std::span<const double>(values_[layer]).subspan(head * capacity_ * d_head_,
                                                         count * d_head_);
}

void KvCache::store(std::size_t layer, std::size_t pos, std::span<const double> key,
                    std::span<const double> value) {
  if (pos >= capacity_) throw std::length_error("kv cache overflow");
  for (std::size_t h = 0; h < n_heads_; ++h) {
    const std::size_t base = (h * capacity_ + pos) * d_head_;
    for (std::size_t i = 0; i < d_head_; ++i) {
      keys_[layer][base + i] = key[h * d_head_ + i];
      values_[layer][base + i] = value[h * d_head_ + i];
    }
  }
}

void KvCache::commit(std::size_t count) {
  if (length_ + count > capacity_) throw std::length_error("kv cache overflow");
  length_ += count;
}

std::size_t KvCache::memory_bytes() const noexcept {
  std::size_t n = 0;
  for (const auto& k : keys_) n += k.capacity();
  for (const auto& v : values_) n += v.capacity();
  return n * sizeof(double);
}

PrefillOutput prefill(const Weights& weights, std::span<const TokenId> tokens,
                      const StepContext& ctx) {
  const ModelConfig& c = weights.config;
  if (tokens.empty()) throw std::invalid_argument("empty prompt");
  if (tokens.size() > c.max_seq_len) throw std::length_error("prompt exceeds max_seq_len");

  const std::size_t n = tokens.size();
  const std::size_t d = c.d_model;
  PrefillOutput out{KvCache(c), {}, {}};
  out.rows.reserve(c.n_layers);

  std::vector<double> xs(n * d);
  auto x_at = [&](std::size_t p) { return std::span<double>(xs).subspan(p * d, d); };
  for (std::size_t p = 0; p < n; ++p) embed(weights, tokens[p], p, x_at(p));

  Scratch s(c);
  std::vector<double> queries(n * d);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto& lw = weights.layers[l];
    for (std::size_t p = 0; p < n; ++p) {
      layer_norm(x_at(p), s.normed);
      matvec(lw.wq, s.normed, std::span<double>(queries).subspan(p * d, d));
      matvec(lw.wk, s.normed, s.k);
      matvec(lw.wv, s.normed, s.v);
      out.cache.store(l, p, s.k, s.v);
    }
    for (std::size_t p = 0; p < n; ++p) {
      AttentionRow row =
          attention_row(out.cache, c, l, std::span<const double>(queries).subspan(p * d, d), p);
      if (p + 1 == n) run_hook(ctx, l, row);
      mix_values(out.cache, c, l, row, s.mixed);
      matvec_add(lw.wo, s.mixed, x_at(p));
      if (p + 1 == n) out.rows.push_back(std::move(row));
    }
    for (std::size_t p = 0; p < n; ++p) feed_forward(lw, s, x_at(p));
  }
  out.cache.commit(n);
  out.logits = final_logits(weights, s, x_at(n - 1));
  return out;
}

ForwardOutput forward_token(const Weights& weights, KvCache& cache, TokenId token,
                            const StepContext& ctx) {
  const ModelConfig& c = weights.config;
  if (cache.length() == 0) throw std::invalid_argument("forward_token needs a prefilled cache");
  if (cache.length() >= cache.capacity()) throw std::length_error("kv cache overflow");

  const std::size_t pos = cache.length();
  std::vector<double> x(c.d_model);
  embed(weights, token, pos, x);

  Scratch s(c);
  ForwardOutput out;
  out.rows.reserve(c.n_layers);
  for (std::size_t l = 0; l < c.n_layers; ++l) {
    const auto& lw = weights.layers[l];
    layer_norm(x, s.normed);
    matvec(lw.wq, s.normed, s.q);
    matvec(lw.wk, s.normed, s.k);
    matvec(lw.wv, s.normed, s.v);
    cache.store(l, pos, s.k, s.v);

    AttentionRow row = attention_row(cache, c, l, s.q, pos);
    run_hook(ctx, l, row);
    mix_values(cache, c, l, row, s.mixed);
    matvec_add(lw.wo, s.mixed, x);
    feed_forward(lw, s, x);
    out.rows.push_back(std::move(row));
  }
  cache.commit(1);
  out.logits = final_logits(weights, s, x);
  return out;
}

}  // namespace tarac
