// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "tarac/analytics.hpp"
#include "tarac/decoder.hpp"
#include "tarac/run_config.hpp"

namespace tarac {

/// Builds or loads the weights a config describes and checks the TARAC
/// layer range against them (ConfigError on mismatch).
[[nodiscard]] Weights materialize_weights(const RunConfig& cfg);

[[nodiscard]] TraceHeader trace_header(const RunConfig& cfg);

struct GenerateReport {
  GenerationResult result;
  std::vector<TokenId> prompt;
  double mean_mass = 0.0;  // post-intervention, recorded layers
  double uplift = 0.0;     // post minus pre intervention, recorded layers
  double tpot_seconds = 0.0;
};

/// One generation per the config; writes the trace when run.trace_out is set.
[[nodiscard]] GenerateReport run_generate(const RunConfig& cfg, const Weights& weights);
void print_generate_summary(std::ostream& out, const RunConfig& cfg, const GenerateReport& report);

/// Baseline vs TARAC over the same prompt; trace holds both runs
/// (run_id "baseline" and "tarac").
[[nodiscard]] CompareReport run_compare(const RunConfig& cfg, const Weights& weights);
void print_compare_summary(std::ostream& out, const RunConfig& cfg, const CompareReport& report);

struct BenchReport {
  std::size_t repeats = 0;
  std::size_t tokens = 0;
  std::vector<double> baseline_tpot;  // seconds, one per repeat
  std::vector<double> tarac_tpot;
  double baseline_median = 0.0;
  double tarac_median = 0.0;
  double tpot_ratio = 0.0;  // tarac_median / baseline_median
  std::size_t baseline_peak_bytes = 0;
  std::size_t tarac_peak_bytes = 0;
  std::size_t state_bytes = 0;           // measured AccumulatedAttention footprint
  std::size_t state_bytes_analytic = 0;  // |layers| x N_i x 2 x sizeof(double)
  [[nodiscard]] double memory_delta_mb() const noexcept {
    return (static_cast<double>(tarac_peak_bytes) - static_cast<double>(baseline_peak_bytes)) /
           (1024.0 * 1024.0);
  }
};

/// Times baseline and TARAC arms `repeats` times each (interleaved with
/// alternating order, one untimed warmup per arm, trace output disabled). With tarac.enabled = false
/// both arms run the baseline.
[[nodiscard]] BenchReport run_bench(const RunConfig& cfg, const Weights& weights,
                                    std::size_t repeats);
void print_bench_report(std::ostream& out, const RunConfig& cfg, const BenchReport& report);

enum class AnalyzeMode { series, profile, densities };

struct AnalyzeOptions {
  std::filesystem::path trace;
  std::optional<std::filesystem::path> labels;
  AnalyzeMode mode = AnalyzeMode::series;
  std::optional<std::string> run_id;  // default: first run in the file
  Bandwidth bandwidth = ScottBandwidth{};
  std::size_t grid_points = 512;
  bool first_occurrence_only = true;
};

/// Writes comma-separated plot data:
///   series:    step,visual_attention
///   profile:   image_token,<run>...[,difference]  (difference = tarac - baseline when both exist)
///   densities: kind,x,correct,hallucinated        (kind = attention | position)
void run_analyze(const AnalyzeOptions& options, std::ostream& out, std::ostream& log);

/// Prints every effective key so the run can be reproduced.
void print_effective_config(std::ostream& out, const RunConfig& cfg);

}  // namespace tarac
