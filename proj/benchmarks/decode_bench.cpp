// SPDX-License-Identifier: Apache-2.0
#include <benchmark/benchmark.h>

#include <optional>
#include <random>
#include <vector>

#include "tarac/decoder.hpp"
#include "tarac/intervention.hpp"
#include "tarac/transformer.hpp"

namespace {

using namespace tarac;

struct Fixture {
  Weights weights;
  SequenceLayout layout;
  std::vector<TokenId> prompt;

  explicit Fixture(std::size_t n_image) : weights(init_weights(ModelConfig{})) {
    layout.n_image = n_image;
    prompt = build_prompt(weights.config, layout, 0);
  }
};

const Fixture& fixture(std::size_t n_image) {
  static std::vector<std::pair<std::size_t, Fixture>> cache;
  for (const auto& [n, f] : cache) {
    if (n == n_image) return f;
  }
  return cache.emplace_back(n_image, Fixture(n_image)).second;
}

// One decode step against a prefilled cache, with and without the hook.
void decode_step(benchmark::State& state, bool with_tarac) {
  const auto& fx = fixture(static_cast<std::size_t>(state.range(0)));
  const auto span = fx.layout.image_span();
  std::optional<TaracIntervention> tarac;
  StepContext ctx{span, 1, {}};
  if (with_tarac) {
    tarac.emplace(TaracConfig{}, span);
    ctx.hook = tarac->hook();
  }
  const auto base = prefill(fx.weights, fx.prompt, ctx);
  for (auto _ : state) {
    state.PauseTiming();
    KvCache cache = base.cache;
    state.ResumeTiming();
    ctx.step = 2;
    benchmark::DoNotOptimize(forward_token(fx.weights, cache, fx.prompt.back(), ctx));
  }
}

void BM_DecodeBaseline(benchmark::State& state) { decode_step(state, false); }
void BM_DecodeTarac(benchmark::State& state) { decode_step(state, true); }
BENCHMARK(BM_DecodeBaseline)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_DecodeTarac)->Arg(64)->Arg(128)->Unit(benchmark::kMicrosecond);

AttentionRow random_row(std::size_t heads, std::size_t positions) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AttentionRow row(heads, positions);
  for (std::size_t h = 0; h < heads; ++h) {
    auto w = row.head(h);
    double sum = 0.0;
    for (double& x : w) sum += (x = u(rng));
    for (double& x : w) x /= sum;
  }
  return row;
}

void BM_LayerIntervention(benchmark::State& state) {
  const auto n_image = static_cast<std::size_t>(state.range(0));
  const ImageSpan span{0, n_image};
  const auto source = random_row(8, n_image + 80);
  TaracConfig cfg;
  cfg.layers = {0, 1};
  AccumulatedAttention acc(cfg.layers, n_image);
  for (auto _ : state) {
    AttentionRow row = source;
    apply_layer_intervention(0, row, acc, cfg, span);
    benchmark::DoNotOptimize(row);
  }
}
BENCHMARK(BM_LayerIntervention)->Arg(64)->Arg(256)->Arg(576);

void BM_SoftmaxRow(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> n(0.0, 4.0);
  std::vector<double> scores(static_cast<std::size_t>(state.range(0)));
  for (double& s : scores) s = n(rng);
  for (auto _ : state) benchmark::DoNotOptimize(softmax_row(scores));
}
BENCHMARK(BM_SoftmaxRow)->Arg(80)->Arg(256)->Arg(1024);

}  // namespace

BENCHMARK_MAIN();
