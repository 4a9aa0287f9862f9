// SPDX-License-Identifier: Apache-2.0
#include "tarac/runner.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <stdexcept>

namespace tarac {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::optional<TaracConfig> tarac_of(const RunConfig& cfg) {
  return cfg.tarac_enabled ? std::optional<TaracConfig>(cfg.tarac) : std::nullopt;
}

GenerateOptions options_of(const RunConfig& cfg) {
  GenerateOptions o;
  o.record_all_layers = cfg.record_all_layers;
  o.record_profile = cfg.record_profile;
  if (!cfg.record_all_layers) o.record_layers = cfg.tarac.layers;
  return o;
}

// Prints |x| < 5e-13 as zero so an exact no-op reads "0", not "-0".
double tidy(double x) { return std::abs(x) < 5e-13 ? 0.0 : x; }

void print_tokens(std::ostream& out, const std::vector<TokenId>& tokens) {
  for (std::size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
  out << '\n';
}

void print_warnings(std::ostream& out, const RunConfig& cfg) {
  if (!cfg.tarac_enabled) return;
  for (const auto& w : cfg.tarac.warnings()) out << "warning: " << w << '\n';
}

void write_csv_row(std::ostream& out, std::initializer_list<double> values) {
  bool first = true;
  for (double v : values) {
    out << (first ? "" : ",") << v;
    first = false;
  }
  out << '\n';
}

}  // namespace

Weights materialize_weights(const RunConfig& cfg) {
  Weights w = cfg.weights_path ? load_weights(*cfg.weights_path) : init_weights(cfg.model);
  if (cfg.tarac.layers.hi > w.config.n_layers) {
    throw ConfigError("tarac.layers", "exceeds the model's " + std::to_string(w.config.n_layers) +
                                          " layers");
  }
  if (cfg.layout.prompt_length() + cfg.max_new_tokens > w.config.max_seq_len + 1) {
    throw ConfigError("run.max_new_tokens", "prompt plus generated tokens exceed max_seq_len");
  }
  return w;
}

TraceHeader trace_header(const RunConfig& cfg) {
  TraceHeader h;
  h.alpha = cfg.tarac.alpha;
  h.beta = cfg.tarac_enabled ? cfg.tarac.beta : 0.0;
  h.layers = to_string(cfg.tarac.layers);
  h.seed = cfg.weights_path ? cfg.run_seed : cfg.model.seed;
  h.n_image = cfg.layout.n_image;
  h.n_prompt = cfg.layout.n_prompt;
  h.image_offset = cfg.layout.image_offset;
  return h;
}

GenerateReport run_generate(const RunConfig& cfg, const Weights& weights) {
  GenerateReport report;
  report.prompt = build_prompt(weights.config, cfg.layout, cfg.run_seed);
  report.result = generate(weights, cfg.layout, report.prompt, tarac_of(cfg), cfg.max_new_tokens,
                           cfg.sampler, options_of(cfg));
  report.mean_mass = report.result.mean_mass_after();
  report.uplift = report.result.mean_mass_after() - report.result.mean_mass_before();
  report.tpot_seconds = report.result.tpot();
  if (cfg.trace_out) {
    TraceWriter writer(*cfg.trace_out, trace_header(cfg));
    writer.write(to_trace_records(report.result, cfg.tarac_enabled ? "tarac" : "baseline"));
  }
  return report;
}

void print_effective_config(std::ostream& out, const RunConfig& cfg) {
  out << "# effective config\n";
  for (const auto& [k, v] : cfg.effective) out << k << " = " << v << '\n';
}

void print_generate_summary(std::ostream& out, const RunConfig& cfg, const GenerateReport& r) {
  print_warnings(out, cfg);
  print_effective_config(out, cfg);
  out << "tokens: ";
  print_tokens(out, r.result.tokens);
  out << std::setprecision(6) << std::fixed;
  out << "generated: " << r.result.tokens.size() << '\n'
      << "termination: "
      << (r.result.termination == Termination::end_token ? "end_token" : "max_new_tokens") << '\n'
      << "mean_image_mass: " << r.mean_mass << '\n'
      << "uplift: " << tidy(r.uplift) << '\n'
      << "tpot_ms: " << r.tpot_seconds * 1e3 << '\n';
  if (cfg.trace_out) out << "trace: " << cfg.trace_out->string() << '\n';
  out.unsetf(std::ios::floatfield);
}

CompareReport run_compare(const RunConfig& cfg, const Weights& weights) {
  const auto prompt = build_prompt(weights.config, cfg.layout, cfg.run_seed);
  auto report = compare_runs(weights, cfg.layout, prompt, cfg.tarac, cfg.max_new_tokens,
                             cfg.sampler, options_of(cfg));
  if (cfg.trace_out) {
    TraceHeader header = trace_header(cfg);
    header.beta = cfg.tarac.beta;
    TraceWriter writer(*cfg.trace_out, header);
    writer.write(to_trace_records(report.baseline, "baseline"));
    writer.write(to_trace_records(report.tarac, "tarac"));
  }
  return report;
}

void print_compare_summary(std::ostream& out, const RunConfig& cfg, const CompareReport& r) {
  print_warnings(out, cfg);
  print_effective_config(out, cfg);
  out << "baseline_tokens: ";
  print_tokens(out, r.baseline.tokens);
  out << "tarac_tokens: ";
  print_tokens(out, r.tarac.tokens);
  out << "divergence_step: ";
  if (r.divergence_step) {
    out << *r.divergence_step << '\n';
  } else {
    out << "none\n";
  }
  out << std::setprecision(6) << std::fixed
      << "mean_image_mass_baseline: " << r.mean_mass_baseline << '\n'
      << "mean_image_mass_tarac: " << r.mean_mass_tarac << '\n'
      << "uplift: " << tidy(r.uplift()) << '\n';
  if (cfg.trace_out) out << "trace: " << cfg.trace_out->string() << '\n';
  out.unsetf(std::ios::floatfield);
}

BenchReport run_bench(const RunConfig& cfg, const Weights& weights, std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("repeats must be >= 1");
  const auto prompt = build_prompt(weights.config, cfg.layout, cfg.run_seed);
  const auto tarac = tarac_of(cfg);
  GenerateOptions options;
  options.record_masses = false;

  auto run_arm = [&](const std::optional<TaracConfig>& arm) {
    return generate(weights, cfg.layout, prompt, arm, cfg.max_new_tokens, cfg.sampler, options);
  };

  BenchReport report;
  report.repeats = repeats;
  (void)run_arm(std::nullopt);  // warmup
  (void)run_arm(tarac);
  for (std::size_t i = 0; i < repeats; ++i) {
    // Alternate which arm goes first so drift does not favour either.
    GenerationResult base, treated;
    if (i % 2 == 0) {
      base = run_arm(std::nullopt);
      treated = run_arm(tarac);
    } else {
      treated = run_arm(tarac);
      base = run_arm(std::nullopt);
    }
    report.baseline_tpot.push_back(base.tpot());
    report.tarac_tpot.push_back(treated.tpot());
    report.tokens = treated.tokens.size();
    report.baseline_peak_bytes = std::max(report.baseline_peak_bytes, base.cache_bytes + base.state_bytes);
    report.tarac_peak_bytes =
        std::max(report.tarac_peak_bytes, treated.cache_bytes + treated.state_bytes);
    report.state_bytes = std::max(report.state_bytes, treated.state_bytes);
  }
  report.baseline_median = median(report.baseline_tpot);
  report.tarac_median = median(report.tarac_tpot);
  report.tpot_ratio = report.baseline_median > 0.0 ? report.tarac_median / report.baseline_median : 0.0;
  report.state_bytes_analytic =
      tarac ? AccumulatedAttention::analytic_bytes(tarac->layers, cfg.layout.n_image) : 0;
  return report;
}

void print_bench_report(std::ostream& out, const RunConfig& cfg, const BenchReport& r) {
  print_warnings(out, cfg);
  print_effective_config(out, cfg);
  out << "repeats: " << r.repeats << '\n'
      << "tokens_per_run: " << r.tokens << '\n'
      << std::setprecision(4) << std::fixed
      << "tpot_baseline_ms: " << r.baseline_median * 1e3 << '\n'
      << "tpot_tarac_ms: " << r.tarac_median * 1e3 << '\n'
      << "tpot_ratio: " << r.tpot_ratio << '\n'
      << "peak_bytes_baseline: " << r.baseline_peak_bytes << '\n'
      << "peak_bytes_tarac: " << r.tarac_peak_bytes << '\n'
      << "memory_delta_mb: " << std::setprecision(6) << r.memory_delta_mb() << '\n'
      << "state_bytes: " << r.state_bytes << '\n'
      << "state_bytes_analytic: " << r.state_bytes_analytic << '\n';
  out.unsetf(std::ios::floatfield);
}

void run_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& log) {
  const Trace trace = read_trace(options.trace);
  const auto ids = run_ids(trace.records);
  if (ids.empty()) throw std::runtime_error("trace has no records");
  out << std::setprecision(10);

  if (options.mode == AnalyzeMode::profile && !options.run_id) {
    std::vector<std::vector<double>> profiles;
    out << "image_token";
    for (const auto& id : ids) {
      profiles.push_back(image_token_profile(select_run(trace.records, id)));
      out << ',' << id;
    }
    const auto base = std::find(ids.begin(), ids.end(), "baseline");
    const auto treated = std::find(ids.begin(), ids.end(), "tarac");
    const bool diff = base != ids.end() && treated != ids.end();
    std::vector<double> difference;
    if (diff) {
      out << ",difference";
      difference = profile_difference(profiles[treated - ids.begin()], profiles[base - ids.begin()]);
    }
    out << '\n';
    for (std::size_t i = 0; i < profiles.front().size(); ++i) {
      out << i;
      for (const auto& p : profiles) out << ',' << p[i];
      if (diff) out << ',' << difference[i];
      out << '\n';
    }
    return;
  }

  const std::string run = options.run_id.value_or(ids.front());
  const auto records = select_run(trace.records, run);
  if (records.empty()) throw std::runtime_error("no records for run '" + run + "'");

  switch (options.mode) {
    case AnalyzeMode::series: {
      const auto series = visual_attention_series(records);
      out << "step,visual_attention\n";
      for (std::size_t i = 0; i < series.size(); ++i) out << i + 1 << ',' << series[i] << '\n';
      return;
    }
    case AnalyzeMode::profile: {
      const auto profile = image_token_profile(records);
      out << "image_token," << run << '\n';
      for (std::size_t i = 0; i < profile.size(); ++i) out << i << ',' << profile[i] << '\n';
      return;
    }
    case AnalyzeMode::densities: {
      if (!options.labels) throw std::invalid_argument("densities need --labels");
      const auto series = visual_attention_series(records);
      const auto labels = read_labels(*options.labels);
      const auto d =
          class_attention_densities(series, labels, options.first_occurrence_only, options.bandwidth);
      log << "samples: correct=" << d.correct_count << " hallucinated=" << d.hallucinated_count
          << '\n';
      auto emit = [&](const char* kind, const std::optional<GaussianKde>& correct,
                      const std::optional<GaussianKde>& hallucinated) {
        const auto* any = correct ? &*correct : (hallucinated ? &*hallucinated : nullptr);
        if (!any) return;
        for (const auto* k : {correct ? &*correct : nullptr, hallucinated ? &*hallucinated : nullptr}) {
          if (k && k->used_fallback()) {
            log << "warning: zero-variance " << kind << " samples; bandwidth fell back to 1e-3\n";
          }
        }
        double lo = any->min_sample() - 6 * any->bandwidth();
        double hi = any->max_sample() + 6 * any->bandwidth();
        for (const auto* k : {correct ? &*correct : nullptr, hallucinated ? &*hallucinated : nullptr}) {
          if (!k) continue;
          lo = std::min(lo, k->min_sample() - 6 * k->bandwidth());
          hi = std::max(hi, k->max_sample() + 6 * k->bandwidth());
        }
        const std::size_t n = std::max<std::size_t>(options.grid_points, 2);
        for (std::size_t i = 0; i < n; ++i) {
          const double x = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
          out << kind << ',';
          write_csv_row(out, {x, correct ? (*correct)(x) : 0.0,
                              hallucinated ? (*hallucinated)(x) : 0.0});
        }
      };
      out << "kind,x,correct,hallucinated\n";
      emit("attention", d.correct_attention, d.hallucinated_attention);
      emit("position", d.correct_position, d.hallucinated_position);
      if (!d.correct_attention) log << "note: no correct samples\n";
      if (!d.hallucinated_attention) log << "note: no hallucinated samples\n";
      return;
    }
  }
}

}  // namespace tarac
