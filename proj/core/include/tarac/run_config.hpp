// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "tarac/decoder.hpp"
#include "tarac/intervention.hpp"
#include "tarac/model.hpp"

namespace tarac {

/// A configuration problem attributable to one key (or "line N" for syntax).
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& message)
      : std::runtime_error(key + ": " + message), key_(std::move(key)) {}
  [[nodiscard]] const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

/// Explicitly set dotted keys and their raw values.
using KeyValues = std::map<std::string, std::string, std::less<>>;

/// Parses `key = value` lines; `#` starts a comment, blank lines are ignored.
[[nodiscard]] KeyValues parse_config_text(std::string_view text);
[[nodiscard]] KeyValues load_config_file(const std::filesystem::path& path);

struct RunConfig {
  ModelConfig model;
  std::optional<std::filesystem::path> weights_path;
  SequenceLayout layout;
  bool tarac_enabled = true;
  TaracConfig tarac;
  std::size_t max_new_tokens = 64;
  Sampler sampler;
  std::uint64_t run_seed = 0;  // prompt synthesis and sampling
  std::optional<std::filesystem::path> trace_out;
  bool record_all_layers = false;
  bool record_profile = true;
  std::size_t repeats = 10;

  /// Every key with its effective value, suitable for echoing a run.
  KeyValues effective;
};

/// Validates keys and values and applies defaults (the desk-scale reference
/// model). Throws ConfigError naming the offending key.
[[nodiscard]] RunConfig build_run_config(const KeyValues& values);

/// Commented template listing every key with its default.
[[nodiscard]] std::string config_template();

/// True if `key` is a recognised dotted config key.
[[nodiscard]] bool is_config_key(std::string_view key);

}  // namespace tarac
