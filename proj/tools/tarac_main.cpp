// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tarac/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

// Named flags and the dotted key each one sets.
const std::map<std::string, std::string> kFlagKeys = {
    {"--alpha", "tarac.alpha"},
    {"--beta", "tarac.beta"},
    {"--layers", "tarac.layers"},
    {"--seed", "model.seed"},
    {"--max-new-tokens", "run.max_new_tokens"},
    {"--image-tokens", "layout.n_image_tokens"},
    {"--prompt-tokens", "layout.n_prompt_tokens"},
    {"--trace-out", "run.trace_out"},
    {"--update-rule", "tarac.update_rule"},
    {"--head-reducer", "tarac.head_reducer"},
    {"--renorm", "tarac.renorm_mode"},
    {"--repeats", "run.repeats"},
};

struct RunArgs {
  std::optional<std::string> config_path;
  tarac::KeyValues overrides;
};

void add_run_options(CLI::App* sub, RunArgs& args) {
  sub->add_option_function<std::string>(
      "--config", [&args](const std::string& p) { args.config_path = p; }, "config file");
  for (const auto& [flag, key] : kFlagKeys) {
    auto* opt = sub->add_option_function<std::string>(
        flag, [&args, key = key](const std::string& v) { args.overrides[key] = v; },
        "sets " + key);
    if (flag == "--update-rule") opt->check(CLI::IsMember({"ema", "literal"}));
    if (flag == "--head-reducer") opt->check(CLI::IsMember({"max", "mean"}));
    if (flag == "--renorm") opt->check(CLI::IsMember({"rowsum", "softmax"}));
  }
  sub->allow_extras();
  sub->footer("Any config key can also be passed as --<section.key> <value>.");
}

// Leftover `--section.key value` or `--section.key=value` arguments.
void apply_extras(const std::vector<std::string>& extras, tarac::KeyValues& out) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw tarac::ConfigError(arg, "unexpected argument");
    std::string key = arg.substr(2);
    std::optional<std::string> value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    }
    if (!tarac::is_config_key(key)) throw tarac::ConfigError(key, "unknown option");
    if (!value) {
      if (i + 1 >= extras.size()) throw tarac::ConfigError(key, "missing value");
      value = extras[++i];
    }
    out[key] = *value;
  }
}

tarac::RunConfig resolve(const RunArgs& args, const std::vector<std::string>& extras) {
  tarac::KeyValues values;
  if (args.config_path) values = tarac::load_config_file(*args.config_path);
  apply_extras(extras, values);
  for (const auto& [k, v] : args.overrides) values[k] = v;
  return tarac::build_run_config(values);
}

tarac::Bandwidth parse_bandwidth(const std::string& s) {
  if (s == "scott") return tarac::ScottBandwidth{};
  try {
    std::size_t used = 0;
    const double h = std::stod(s, &used);
    if (used == s.size() && h > 0.0) return tarac::FixedBandwidth{h};
  } catch (const std::exception&) {
  }
  throw tarac::ConfigError("--bandwidth", "expected 'scott' or a positive number, got '" + s + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tarac: decode-time image attention accumulation on a toy transformer"};
  app.require_subcommand(1);

  RunArgs gen_args, cmp_args, bench_args;
  std::optional<std::string> save_weights_path;

  auto* gen = app.add_subcommand("generate", "run one generation and print a summary");
  add_run_options(gen, gen_args);
  gen->add_option_function<std::string>(
      "--save-weights", [&](const std::string& p) { save_weights_path = p; },
      "also write the model weights to PATH");

  auto* cmp = app.add_subcommand("compare", "baseline vs TARAC over the same prompt");
  add_run_options(cmp, cmp_args);

  auto* bench = app.add_subcommand("bench", "time-per-output-token and memory overhead");
  add_run_options(bench, bench_args);

  tarac::AnalyzeOptions analyze_opts;
  std::string analyze_mode = "series";
  std::string bandwidth = "scott";
  std::string labels_path, run_id, analyze_out;
  bool all_occurrences = false;
  auto* analyze = app.add_subcommand("analyze", "emit plot data from a trace file");
  analyze->add_option("--trace", analyze_opts.trace, "trace file")->required();
  analyze->add_option("--labels", labels_path, "label CSV (step,word,class,multi_token)");
  analyze->add_option("--mode", analyze_mode, "series | profile | densities")
      ->check(CLI::IsMember({"series", "profile", "densities"}));
  analyze->add_option("--run", run_id, "run id to analyze");
  analyze->add_option("--bandwidth", bandwidth, "scott or a fixed bandwidth");
  analyze->add_option("--grid", analyze_opts.grid_points, "density grid points");
  analyze->add_flag("--all-occurrences", all_occurrences, "keep repeated words");
  analyze->add_option("--out", analyze_out, "output file (default stdout)");

  std::string template_out;
  auto* init = app.add_subcommand("init-config", "print a commented config template");
  init->add_option("--out", template_out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*gen) {
      const auto cfg = resolve(gen_args, gen->remaining());
      const auto weights = tarac::materialize_weights(cfg);
      if (save_weights_path) tarac::save_weights(weights, *save_weights_path);
      tarac::print_generate_summary(std::cout, cfg, tarac::run_generate(cfg, weights));
    } else if (*cmp) {
      const auto cfg = resolve(cmp_args, cmp->remaining());
      const auto weights = tarac::materialize_weights(cfg);
      tarac::print_compare_summary(std::cout, cfg, tarac::run_compare(cfg, weights));
    } else if (*bench) {
      const auto cfg = resolve(bench_args, bench->remaining());
      const auto weights = tarac::materialize_weights(cfg);
      tarac::print_bench_report(std::cout, cfg, tarac::run_bench(cfg, weights, cfg.repeats));
    } else if (*analyze) {
      analyze_opts.mode = analyze_mode == "profile"     ? tarac::AnalyzeMode::profile
                          : analyze_mode == "densities" ? tarac::AnalyzeMode::densities
                                                        : tarac::AnalyzeMode::series;
      if (!labels_path.empty()) analyze_opts.labels = labels_path;
      if (!run_id.empty()) analyze_opts.run_id = run_id;
      analyze_opts.bandwidth = parse_bandwidth(bandwidth);
      analyze_opts.first_occurrence_only = !all_occurrences;
      if (analyze_out.empty()) {
        tarac::run_analyze(analyze_opts, std::cout, std::cerr);
      } else {
        std::ofstream out(analyze_out);
        if (!out) throw std::runtime_error("cannot open " + analyze_out);
        tarac::run_analyze(analyze_opts, out, std::cerr);
      }
    } else if (*init) {
      if (template_out.empty()) {
        std::cout << tarac::config_template();
      } else {
        std::ofstream out(template_out);
        if (!out) throw std::runtime_error("cannot open " + template_out);
        out << tarac::config_template();
      }
    }
  } catch (const tarac::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
