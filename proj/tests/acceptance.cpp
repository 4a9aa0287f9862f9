// SPDX-License-Identifier: Apache-2.0
//
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "support/generators.hpp"
#include "support/reference_model.hpp"
#include "tarac/analytics.hpp"
#include "tarac/decoder.hpp"
#include "tarac/intervention.hpp"
#include "tarac/run_config.hpp"
#include "tarac/runner.hpp"
#include "tarac/trace.hpp"

namespace {

using namespace tarac;
using testing::Gen;

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// The default desk-scale model: L=8, H=8, d_model=256, vocab 1024, N_i=64, N_p=16.
RunConfig reference_config(std::uint64_t seed) {
  return build_run_config({{"model.seed", std::to_string(seed)}});
}

Verdict beta_zero_identity() {
  Gen g(1001);
  const auto start = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t mismatched = 0;
  for (int i = 0; i < 50; ++i) {
    ModelConfig c;
    c.n_layers = g.index(1, 6);
    c.n_heads = std::size_t{1} << g.index(0, 3);
    c.d_head = 8;
    c.d_model = c.n_heads * c.d_head;
    c.vocab_size = 256;
    c.max_seq_len = 64;
    c.seed = static_cast<std::uint64_t>(i);
    const auto w = init_weights(c);

    SequenceLayout layout;
    layout.n_image = g.index(0, 16);
    layout.n_prompt = g.index(1, 8);
    layout.image_offset = g.index(0, 2);
    const auto prompt = build_prompt(c, layout, c.seed);

    TaracConfig t;
    t.alpha = std::round(g.real(0.0, 1.0) * 10.0) / 10.0;
    t.beta = 0.0;
    const std::size_t lo = g.index(0, c.n_layers);
    t.layers = {lo, g.index(lo, c.n_layers)};
    t.head_reducer = g.coin() ? HeadReducer::max : HeadReducer::mean;
    t.update_rule = g.coin(0.8) ? UpdateRule::ema : UpdateRule::two_step_literal;

    GenerateOptions opt;
    opt.keep_logits = true;
    opt.record_masses = false;
    const auto base = generate(w, layout, prompt, std::nullopt, 24, Sampler::greedy(), opt);
    const auto zero = generate(w, layout, prompt, t, 24, Sampler::greedy(), opt);
    if (base.tokens != zero.tokens) ++mismatched;
    for (std::size_t s = 0; s < std::min(base.logits.size(), zero.logits.size()); ++s) {
      for (std::size_t k = 0; k < base.logits[s].size(); ++k) {
        worst = std::max(worst, std::abs(base.logits[s][k] - zero.logits[s][k]));
      }
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {mismatched == 0 && worst <= 1e-12 && secs < 30.0,
          fmt("50 configs, token mismatches %zu, max |dlogit| %.1e, %.1f s", mismatched, worst, secs)};
}

Verdict uplift_closed_form() {
  Gen g(1002);
  double worst = 0.0;
  std::size_t below_m = 0, not_strict = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = g.index(2, 48);
    ImageSpan span = g.span_within(n);
    if (span.empty()) span = {0, 1};
    const std::size_t heads = g.index(1, 8);
    auto row = g.softmax_row(heads, n);
    const double beta = i % 10 == 0 ? 0.0 : g.real(0.0, 3.0);
    const double alpha = g.real(0.0, 1.0);

    // Seed the layer with a random history so the accumulated vector is arbitrary.
    AccumulatedAttention state({0, 1}, span.size());
    const auto history = g.reals(span.size(), 0.0, g.real(0.0, 1.0));
    update_accumulated(state, 0, history, alpha, UpdateRule::ema);

    const auto captured = capture_image_attention(row, span, HeadReducer::max);
    double s = 0.0;
    for (std::size_t k = 0; k < span.size(); ++k) s += alpha * captured[k] + (1 - alpha) * history[k];

    std::vector<double> m(heads);
    for (std::size_t h = 0; h < heads; ++h) m[h] = image_mass(row.head(h), span);
    TaracConfig cfg;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.layers = {0, 1};
    apply_layer_intervention(0, row, state, cfg, span);

    for (std::size_t h = 0; h < heads; ++h) {
      const double post = image_mass(row.head(h), span);
      const double want = (m[h] + beta * s) / (1.0 + beta * s);
      worst = std::max(worst, std::abs(post - want));
      if (post < m[h] - 1e-12) ++below_m;
      // Rows are strictly positive, so m < 1 exactly when the span leaves a position out;
      // a full-row span has m = 1 even when the float sum rounds just below it.
      const bool m_below_one = span.size() < n;
      if (beta * s > 0.0 && m_below_one && !(post > m[h])) ++not_strict;
    }
  }
  return {worst <= 1e-6 && below_m == 0 && not_strict == 0,
          fmt("1000 cases, max error %.1e, below m %zu, not strict %zu", worst, below_m, not_strict)};
}

Verdict ema_oracle() {
  Gen g(1003);
  double worst = 0.0;
  for (int h = 0; h < 100; ++h) {
    const std::size_t n = g.index(1, 16);
    std::vector<std::vector<double>> abar(64);
    for (auto& a : abar) a = g.reals(n, 0.0, 1.0);
    for (int ai = 0; ai <= 10; ++ai) {
      const double alpha = ai / 10.0;
      AccumulatedAttention state({0, 1}, n);
      for (std::size_t t = 1; t <= 64; ++t) {
        update_accumulated(state, 0, abar[t - 1], alpha, UpdateRule::ema);
        for (std::size_t i = 0; i < n; ++i) {
          double want = std::pow(1.0 - alpha, static_cast<double>(t - 1)) * abar[0][i];
          for (std::size_t k = 2; k <= t; ++k) {
            want += alpha * std::pow(1.0 - alpha, static_cast<double>(t - k)) * abar[k - 1][i];
          }
          worst = std::max(worst, std::abs(state.accumulated(0)[i] - want));
        }
      }
    }
  }
  return {worst <= 1e-10, fmt("100 histories x 11 alphas x 64 steps, max error %.1e", worst)};
}

Verdict hand_example() {
  auto row = AttentionRow::from_heads({{0.3, 0.2, 0.4, 0.1}});
  AccumulatedAttention state({0, 1}, 2);
  TaracConfig cfg;
  cfg.beta = 0.5;
  cfg.layers = {0, 1};
  apply_layer_intervention(0, row, state, cfg, {0, 2});
  const double want[] = {0.36, 0.24, 0.32, 0.08};
  double worst = 0.0;
  for (std::size_t i = 0; i < 4; ++i) worst = std::max(worst, std::abs(row.at(0, i) - want[i]));
  return {worst <= 1e-9, fmt("[%.6f, %.6f, %.6f, %.6f], max error %.1e", row.at(0, 0), row.at(0, 1),
                             row.at(0, 2), row.at(0, 3), worst)};
}

Verdict incremental_vs_recompute() {
  const auto cfg = reference_config(0);
  const auto w = materialize_weights(cfg);
  const auto prompt = build_prompt(w.config, cfg.layout, cfg.run_seed);
  TaracConfig t;  // alpha = beta = 0.5, layers 2:6
  GenerateOptions opt;
  opt.keep_logits = true;
  opt.record_masses = false;
  const auto inc = generate(w, cfg.layout, prompt, t, 16, Sampler::greedy(), opt);

  double worst = 0.0;
  std::size_t token_mismatch = 0;
  std::vector<TokenId> seq = prompt;
  for (std::size_t s = 0; s < inc.tokens.size(); ++s) {
    const auto ref = testing::reference_logits(w, seq, t, cfg.layout.image_span(), prompt.size() - 1);
    const auto pick = static_cast<TokenId>(std::max_element(ref.begin(), ref.end()) - ref.begin());
    if (pick != inc.tokens[s]) ++token_mismatch;
    for (std::size_t k = 0; k < ref.size(); ++k) {
      worst = std::max(worst, std::abs(ref[k] - inc.logits[s][k]));
    }
    seq.push_back(inc.tokens[s]);
  }
  return {inc.tokens.size() == 16 && token_mismatch == 0 && worst <= 1e-4,
          fmt("%zu tokens, token mismatches %zu, max |dlogit| %.1e", inc.tokens.size(),
              token_mismatch, worst)};
}

Verdict renormalization() {
  Gen g(1006);
  double worst_sum = 0.0, worst_idem = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const std::size_t heads = g.index(1, 8), n = g.index(1, 96);
    AttentionRow row(heads, n);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < n; ++j) row.at(h, j) = g.real(1e-9, g.coin(0.1) ? 50.0 : 1.0);
    }
    renormalize_last_row(row, RenormMode::rowsum);
    const auto once = row;
    for (std::size_t h = 0; h < heads; ++h) {
      double sum = 0.0;
      for (double v : row.head(h)) sum += v;
      worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    }
    renormalize_last_row(row, RenormMode::rowsum);
    for (std::size_t k = 0; k < row.data().size(); ++k) {
      worst_idem = std::max(worst_idem, std::abs(row.data()[k] - once.data()[k]));
    }
  }
  auto diag = AttentionRow::from_heads({{0.9, 0.05, 0.05}});
  renormalize_last_row(diag, RenormMode::softmax_diagnostic);
  double worst_flat = 0.0;
  for (double v : diag.head(0)) worst_flat = std::max(worst_flat, std::abs(v - 1.0 / 3.0));
  return {worst_sum <= 1e-5 && worst_idem <= 1e-12 && worst_flat <= 0.25,
          fmt("10^4 rows, max |sum-1| %.1e, idempotence %.1e; diagnostic max |p-1/3| %.3f",
              worst_sum, worst_idem, worst_flat)};
}

Verdict overhead_bound() {
  const auto start = std::chrono::steady_clock::now();
  const auto cfg = reference_config(0);
  const auto w = materialize_weights(cfg);
  const auto rep = run_bench(cfg, w, 10);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const double delta = static_cast<double>(rep.tarac_peak_bytes) -
                       static_cast<double>(rep.baseline_peak_bytes);
  const double analytic = static_cast<double>(rep.state_bytes_analytic);
  const double mem_err = std::abs(delta - analytic) / analytic;
  return {rep.tpot_ratio <= 1.10 && mem_err <= 0.10 && secs < 120.0,
          fmt("TPOT ratio %.3f (%.3f / %.3f ms), state delta %.0f B vs analytic %.0f B (%.1f%%), %.1f s",
              rep.tpot_ratio, rep.tarac_median * 1e3, rep.baseline_median * 1e3, delta, analytic,
              100.0 * mem_err, secs)};
}

Verdict kde_correctness() {
  const GaussianKde one({0.0}, FixedBandwidth{1.0});
  const GaussianKde two({-1.0, 1.0}, FixedBandwidth{1.0});
  const double e1 = std::abs(one(0.0) - 1.0 / std::sqrt(2.0 * std::numbers::pi));
  const double e2 = std::abs(two(0.0) - std::exp(-0.5) / std::sqrt(2.0 * std::numbers::pi));

  Gen g(1008);
  double worst_integral = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto xs = g.reals(g.index(1, 64), -10.0, 10.0);
    const Bandwidth bw = g.coin() ? Bandwidth{ScottBandwidth{}} : Bandwidth{FixedBandwidth{g.real(0.01, 3.0)}};
    const GaussianKde kde(xs, bw);
    const auto grid = kde.grid(2048);
    const auto ys = kde.evaluate(grid);
    double area = 0.0;
    for (std::size_t k = 1; k < grid.size(); ++k) area += 0.5 * (ys[k] + ys[k - 1]) * (grid[k] - grid[k - 1]);
    worst_integral = std::max(worst_integral, std::abs(area - 1.0));
  }

  std::size_t not_idempotent = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<LabeledToken> labels(g.index(0, 40));
    for (auto& l : labels) {
      l.step = g.index(1, 64);
      l.word = "w" + std::to_string(g.index(0, 12));
      l.label = g.coin() ? TokenClass::correct : TokenClass::hallucinated;
      l.multi_token = g.coin(0.15);
    }
    const auto once = first_occurrence_filter(labels);
    if (first_occurrence_filter(once) != once) ++not_idempotent;
  }
  return {e1 <= 1e-6 && e2 <= 1e-6 && worst_integral <= 1e-3 && not_idempotent == 0,
          fmt("closed forms %.1e / %.1e, max |integral-1| %.1e, filter non-idempotent %zu/1000", e1,
              e2, worst_integral, not_idempotent)};
}

Verdict sink_direction() {
  std::string detail;
  std::size_t dominated = 0;
  const std::size_t seeds = 5;
  for (std::uint64_t seed = 0; seed < seeds; ++seed) {
    const auto cfg = reference_config(seed);
    const auto w = materialize_weights(cfg);
    const auto prompt = build_prompt(w.config, cfg.layout, cfg.run_seed);
    GenerateOptions opt;
    opt.record_profile = true;
    const auto rep = compare_runs(w, cfg.layout, prompt, cfg.tarac, cfg.max_new_tokens,
                                  Sampler::greedy(), opt);
    auto mean_of = [](const GenerationResult& r, const char* id) {
      const auto profile = image_token_profile(to_trace_records(r, id));
      double s = 0.0;
      for (double v : profile) s += v;
      return s / static_cast<double>(profile.size());
    };
    const double base = mean_of(rep.baseline, "baseline");
    const double treated = mean_of(rep.tarac, "tarac");
    if (treated > base) ++dominated;
    detail += fmt("%s%.5f>%.5f", seed ? ", " : "", treated, base);
  }
  return {dominated == seeds, fmt("%zu/%zu seeds (tarac>baseline: %s)", dominated, seeds, detail.c_str())};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Verdict()> run;
  };
  const Criterion criteria[] = {
      {"beta=0 identity", beta_zero_identity},
      {"image-mass uplift closed form", uplift_closed_form},
      {"EMA oracle", ema_oracle},
      {"pipeline hand example", hand_example},
      {"incremental vs recompute decode", incremental_vs_recompute},
      {"renormalization suite", renormalization},
      {"overhead bound", overhead_bound},
      {"KDE correctness", kde_correctness},
      {"attention-sink direction", sink_direction},
  };

  int failures = 0;
  int index = 0;
  for (const auto& c : criteria) {
    ++index;
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::printf("[%s] %d %s: %s\n", v.pass ? "PASS" : "FAIL", index, c.name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", index - failures, index);
  return failures == 0 ? 0 : 1;
}
