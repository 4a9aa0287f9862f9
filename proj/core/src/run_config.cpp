// SPDX-License-Identifier: Apache-2.0
#include "tarac/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tarac {
namespace {

struct KeySpec {
  std::string_view key;
  std::string_view fallback;  // empty: unset unless given
  std::string_view help;
};

// Defaults describe the desk-scale reference model.
constexpr KeySpec kKeys[] = {
    {"model.n_layers", "8", "transformer layers"},
    {"model.n_heads", "8", "attention heads per layer"},
    {"model.d_model", "256", "model width; must be divisible by n_heads"},
    {"model.vocab_size", "1024", "vocabulary size"},
    {"model.max_seq_len", "256", "maximum cached positions"},
    {"model.seed", "", "weight seed (exactly one of model.seed / model.weights)"},
    {"model.weights", "", "path to a TTWT weight file"},
    {"model.end_token", "0", "end-of-sequence id"},
    {"model.bos_token", "1", "begin-of-sequence id"},
    {"model.image_token_base", "0", "first image id; 0 = vocab_size / 2"},
    {"layout.n_image_tokens", "64", "image-token span length N_i"},
    {"layout.n_prompt_tokens", "16", "text prompt length N_p"},
    {"layout.image_offset", "0", "leading tokens before the image span (first is BOS)"},
    {"tarac.enabled", "true", "install the intervention"},
    {"tarac.alpha", "0.5", "memory update factor in [0, 1]"},
    {"tarac.beta", "0.5", "injection coefficient >= 0"},
    {"tarac.layers", "2:6", "half-open zero-based layer range lo:hi"},
    {"tarac.head_reducer", "max", "max | mean"},
    {"tarac.renorm_mode", "rowsum", "rowsum | softmax (diagnostic only)"},
    {"tarac.update_rule", "ema", "ema | literal"},
    {"run.max_new_tokens", "64", "tokens to generate"},
    {"run.sampler", "greedy", "greedy | temperature"},
    {"run.temperature", "1.0", "sampling temperature (sampler = temperature)"},
    {"run.seed", "", "prompt and sampler seed; defaults to model.seed"},
    {"run.trace_out", "", "trace file path (JSON lines)"},
    {"run.record_all_layers", "false", "record image mass on every layer"},
    {"run.record_profile", "true", "record per-image-token attention"},
    {"run.repeats", "10", "bench repetitions"},
};

const KeySpec* find_key(std::string_view key) {
  for (const auto& k : kKeys) {
    if (k.key == key) return &k;
  }
  return nullptr;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

class Reader {
 public:
  explicit Reader(const KeyValues& v) : values_(v) {}

  [[nodiscard]] bool has(std::string_view key) const { return values_.find(key) != values_.end(); }

  [[nodiscard]] const std::string& raw(std::string_view key) const {
    return values_.find(key)->second;
  }

  std::uint64_t u64(std::string_view key) const {
    const auto& s = raw(key);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError(std::string(key), "expected a non-negative integer, got '" + s + "'");
    }
    return v;
  }

  std::size_t size(std::string_view key) const { return static_cast<std::size_t>(u64(key)); }

  double real(std::string_view key) const {
    const auto& s = raw(key);
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used == s.size() && std::isfinite(v)) return v;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string(key), "expected a real number, got '" + s + "'");
  }

  bool boolean(std::string_view key) const {
    const auto& s = raw(key);
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError(std::string(key), "expected true|false, got '" + s + "'");
  }

 private:
  const KeyValues& values_;
};

}  // namespace

KeyValues parse_config_text(std::string_view text) {
  KeyValues out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no), "expected 'key = value'");
    }
    std::string key = trim(std::string_view(body).substr(0, eq));
    std::string value = trim(std::string_view(body).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no), "empty key");
    out[key] = value;
  }
  return out;
}

KeyValues load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

bool is_config_key(std::string_view key) { return find_key(key) != nullptr; }

RunConfig build_run_config(const KeyValues& explicit_values) {
  for (const auto& [key, value] : explicit_values) {
    if (!is_config_key(key)) throw ConfigError(key, "unknown key");
  }

  const bool has_seed = explicit_values.count("model.seed") > 0;
  const bool has_weights = explicit_values.count("model.weights") > 0;
  if (has_seed == has_weights) {
    throw ConfigError(has_seed ? "model.weights" : "model.seed",
                      "set exactly one of model.seed and model.weights");
  }

  KeyValues values = explicit_values;
  for (const auto& k : kKeys) {
    if (!k.fallback.empty()) values.try_emplace(std::string(k.key), std::string(k.fallback));
  }
  Reader r(values);
  RunConfig cfg;

  if (has_weights) {
    for (std::string_view dim : {"model.n_layers", "model.n_heads", "model.d_model",
                                 "model.vocab_size", "model.max_seq_len"}) {
      if (explicit_values.count(std::string(dim))) {
        throw ConfigError(std::string(dim), "model dimensions come from model.weights");
      }
    }
    cfg.weights_path = r.raw("model.weights");
    if (!std::filesystem::is_regular_file(*cfg.weights_path)) {
      throw ConfigError("model.weights", "weight file not found: " + cfg.weights_path->string());
    }
  } else {
    cfg.model.n_layers = r.size("model.n_layers");
    cfg.model.n_heads = r.size("model.n_heads");
    cfg.model.d_model = r.size("model.d_model");
    cfg.model.vocab_size = r.size("model.vocab_size");
    cfg.model.max_seq_len = r.size("model.max_seq_len");
    cfg.model.seed = r.u64("model.seed");
    cfg.model.end_token = static_cast<TokenId>(r.u64("model.end_token"));
    cfg.model.bos_token = static_cast<TokenId>(r.u64("model.bos_token"));
    cfg.model.image_token_base = static_cast<TokenId>(r.u64("model.image_token_base"));
    if (cfg.model.n_heads == 0 || cfg.model.d_model % cfg.model.n_heads != 0) {
      throw ConfigError("model.d_model", "must be a positive multiple of model.n_heads");
    }
    cfg.model.d_head = cfg.model.d_model / cfg.model.n_heads;
    try {
      cfg.model.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError("model", e.what());
    }
  }

  cfg.layout.n_image = r.size("layout.n_image_tokens");
  cfg.layout.n_prompt = r.size("layout.n_prompt_tokens");
  cfg.layout.image_offset = r.size("layout.image_offset");
  if (cfg.layout.prompt_length() == 0) {
    throw ConfigError("layout.n_prompt_tokens", "prompt must contain at least one token");
  }

  cfg.tarac_enabled = r.boolean("tarac.enabled");
  cfg.tarac.alpha = r.real("tarac.alpha");
  if (cfg.tarac.alpha < 0.0 || cfg.tarac.alpha > 1.0) {
    throw ConfigError("tarac.alpha", "must lie in [0, 1]");
  }
  cfg.tarac.beta = r.real("tarac.beta");
  if (cfg.tarac.beta < 0.0) throw ConfigError("tarac.beta", "must be >= 0");
  try {
    cfg.tarac.layers = parse_layer_range(r.raw("tarac.layers"));
  } catch (const std::invalid_argument& e) {
    throw ConfigError("tarac.layers", e.what());
  }
  if (!has_weights && cfg.tarac.layers.hi > cfg.model.n_layers) {
    throw ConfigError("tarac.layers", "exceeds model.n_layers");
  }

  const auto& reducer = r.raw("tarac.head_reducer");
  if (reducer == "max") {
    cfg.tarac.head_reducer = HeadReducer::max;
  } else if (reducer == "mean") {
    cfg.tarac.head_reducer = HeadReducer::mean;
  } else {
    throw ConfigError("tarac.head_reducer", "expected max|mean, got '" + reducer + "'");
  }

  const auto& renorm = r.raw("tarac.renorm_mode");
  if (renorm == "rowsum") {
    cfg.tarac.renorm_mode = RenormMode::rowsum;
  } else if (renorm == "softmax" || renorm == "softmax-diagnostic") {
    cfg.tarac.renorm_mode = RenormMode::softmax_diagnostic;
  } else {
    throw ConfigError("tarac.renorm_mode", "expected rowsum|softmax, got '" + renorm + "'");
  }

  const auto& rule = r.raw("tarac.update_rule");
  if (rule == "ema") {
    cfg.tarac.update_rule = UpdateRule::ema;
  } else if (rule == "literal" || rule == "two-step-literal") {
    cfg.tarac.update_rule = UpdateRule::two_step_literal;
  } else {
    throw ConfigError("tarac.update_rule", "expected ema|literal, got '" + rule + "'");
  }

  cfg.max_new_tokens = r.size("run.max_new_tokens");
  const auto& sampler = r.raw("run.sampler");
  cfg.run_seed = r.has("run.seed") ? r.u64("run.seed") : cfg.model.seed;
  if (sampler == "greedy") {
    cfg.sampler = Sampler::greedy();
  } else if (sampler == "temperature") {
    const double tau = r.real("run.temperature");
    if (!(tau > 0.0)) throw ConfigError("run.temperature", "must be > 0");
    cfg.sampler = Sampler::with_temperature(tau, cfg.run_seed);
  } else {
    throw ConfigError("run.sampler", "expected greedy|temperature, got '" + sampler + "'");
  }
  if (r.has("run.trace_out") && !r.raw("run.trace_out").empty()) {
    cfg.trace_out = r.raw("run.trace_out");
  }
  cfg.record_all_layers = r.boolean("run.record_all_layers");
  cfg.record_profile = r.boolean("run.record_profile");
  cfg.repeats = r.size("run.repeats");
  if (cfg.repeats == 0) throw ConfigError("run.repeats", "must be >= 1");

  cfg.effective = values;
  if (!cfg.effective.count("run.seed")) cfg.effective["run.seed"] = std::to_string(cfg.run_seed);
  return cfg;
}

std::string config_template() {
  std::ostringstream out;
  out << "# tarac run configuration: flat dotted keys, one 'key = value' per line.\n"
      << "# Any key can be overridden on the command line with --<key> <value>.\n";
  std::string_view section;
  for (const auto& k : kKeys) {
    const auto dot = k.key.find('.');
    const auto sec = k.key.substr(0, dot);
    if (sec != section) {
      out << "\n# [" << sec << "]\n";
      section = sec;
    }
    out << "# " << k.help << "\n";
    if (k.key == "model.seed") {
      out << k.key << " = 0\n";
    } else if (k.fallback.empty()) {
      out << "# " << k.key << " =\n";
    } else {
      out << k.key << " = " << k.fallback << "\n";
    }
  }
  return out.str();
}

}  // namespace tarac
