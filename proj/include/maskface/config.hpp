#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskface/trainer.hpp"

namespace maskface {

/// Everything one CLI invocation needs. Missing keys keep the unmasked
/// defaults; `preset` selects the masked or unmasked bundle as the base.
struct CliConfig {
  TrainConfig train;
  int min_images = 8;
  double train_fraction = 0.7;
  int image_size = 180;
  float hflip_probability = 0.5f;
  std::filesystem::path output_dir = "maskface_out";

  PreprocessConfig preprocess() const;
  void validate() const;
};

using ConfigOverrides = std::vector<std::pair<std::string, std::string>>;

/// Names accepted in config files and as --key overrides.
const std::vector<std::string>& config_keys();

/// Applies one key=value; throws ConfigError mentioning `where`.
void apply_config_value(CliConfig& cfg, const std::string& key, const std::string& value, const std::string& where);
/// "unmasked" or "masked".
void apply_preset(CliConfig& cfg, const std::string& name);

struct ConfigEntry {
  std::string key;
  std::string value;
  /// "<source>:<line>" for error messages.
  std::string where;
};

/// Parses `key=value` text (whitespace-separated pairs, `#` comments).
std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source);

/// Precedence, lowest first: defaults, preset, file, MASKFACE_SEED
/// (`env_seed`), command-line overrides. The result is validated.
CliConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides,
                       const std::optional<std::string>& env_seed = std::nullopt);

}  // namespace maskface
