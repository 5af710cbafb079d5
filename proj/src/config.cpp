#include "maskface/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "maskface/errors.hpp"

namespace maskface {

namespace {

template <typename T>
T parse_number(const std::string& key, const std::string& value, const std::string& where) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || value.empty()) {
    throw ConfigError(where + ": cannot parse value '" + value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value, const std::string& where) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError(where + ": key '" + key + "' expects true/false, got '" + value + "'");
}

}  // namespace

PreprocessConfig CliConfig::preprocess() const {
  PreprocessConfig p;
  p.target_size = image_size;
  p.hflip_probability = hflip_probability;
  return p;
}

void CliConfig::validate() const {
  train.validate();
  if (min_images < 1) throw ConfigError("min_images must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must be in (0,1)");
  if (image_size < 33) throw ConfigError("image_size must be >= 33");
  if (!(hflip_probability >= 0.0f && hflip_probability <= 1.0f)) throw ConfigError("hflip_probability must be in [0,1]");
  if (output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = {
      "preset",        "batch_size",   "optimizer",      "dropout",    "lr",
      "lr_gamma",      "lr_step_size", "epochs",         "freeze_children",
      "momentum",      "nesterov",     "seed",           "data_root",  "checkpoint_in",
      "output_dir",    "min_images",   "train_fraction", "image_size", "hflip_probability",
      "record_wall_time"};
  return keys;
}

void apply_preset(CliConfig& cfg, const std::string& name) {
  if (name == "unmasked") {
    cfg.train = TrainConfig::unmasked();
  } else if (name == "masked") {
    cfg.train = TrainConfig::masked();
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected unmasked or masked)");
  }
}

void apply_config_value(CliConfig& cfg, const std::string& key, const std::string& v, const std::string& where) {
  auto& t = cfg.train;
  if (key == "preset") {
    apply_preset(cfg, v);
  } else if (key == "batch_size") {
    t.batch_size = parse_number<int>(key, v, where);
  } else if (key == "optimizer") {
    if (v == "sgd") {
      t.optimizer = OptimizerKind::kSgd;
    } else if (v == "adam") {
      t.optimizer = OptimizerKind::kAdam;
    } else {
      throw ConfigError(where + ": unknown optimizer '" + v + "' (expected sgd or adam)");
    }
  } else if (key == "dropout") {
    t.dropout_p = parse_number<float>(key, v, where);
  } else if (key == "lr") {
    t.base_lr = parse_number<double>(key, v, where);
  } else if (key == "lr_gamma") {
    t.lr_gamma = parse_number<double>(key, v, where);
  } else if (key == "lr_step_size") {
    t.lr_step_size = parse_number<int>(key, v, where);
  } else if (key == "epochs") {
    t.epochs = parse_number<int>(key, v, where);
  } else if (key == "freeze_children") {
    t.freeze_children = parse_number<int>(key, v, where);
  } else if (key == "momentum") {
    t.momentum = parse_number<float>(key, v, where);
  } else if (key == "nesterov") {
    t.nesterov = parse_bool(key, v, where);
  } else if (key == "seed") {
    t.seed = parse_number<std::uint64_t>(key, v, where);
  } else if (key == "data_root") {
    t.data_root = v;
  } else if (key == "checkpoint_in") {
    t.checkpoint_in = v;
  } else if (key == "output_dir") {
    cfg.output_dir = v;
  } else if (key == "min_images") {
    cfg.min_images = parse_number<int>(key, v, where);
  } else if (key == "train_fraction") {
    cfg.train_fraction = parse_number<double>(key, v, where);
  } else if (key == "image_size") {
    cfg.image_size = parse_number<int>(key, v, where);
  } else if (key == "hflip_probability") {
    cfg.hflip_probability = parse_number<float>(key, v, where);
  } else if (key == "record_wall_time") {
    t.record_wall_time = parse_bool(key, v, where);
  } else {
    throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

std::vector<ConfigEntry> parse_config_text(const std::string& text, const std::string& source) {
  std::vector<ConfigEntry> out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream tokens(line);
    std::string token;
    while (tokens >> token) {
      const auto eq = token.find('=');
      std::string where = source + ":" + std::to_string(line_no);
      if (eq == std::string::npos || eq == 0) throw ConfigError(where + ": expected key=value, got '" + token + "'");
      out.push_back({token.substr(0, eq), token.substr(eq + 1), std::move(where)});
    }
  }
  return out;
}

CliConfig parse_config(const std::optional<std::filesystem::path>& file, const ConfigOverrides& overrides,
                       const std::optional<std::string>& env_seed) {
  std::vector<ConfigEntry> from_file;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot read config file " + file->string());
    std::stringstream buf;
    buf << in.rdbuf();
    from_file = parse_config_text(buf.str(), file->string());
  }

  CliConfig cfg;
  // The preset is the base layer whichever source names it; the CLI wins.
  std::optional<std::string> preset;
  for (const auto& e : from_file) {
    if (e.key == "preset") preset = e.value;
  }
  for (const auto& [k, v] : overrides) {
    if (k == "preset") preset = v;
  }
  if (preset) apply_preset(cfg, *preset);

  for (const auto& e : from_file) {
    if (e.key != "preset") apply_config_value(cfg, e.key, e.value, e.where);
  }
  if (env_seed) apply_config_value(cfg, "seed", *env_seed, "MASKFACE_SEED");
  for (const auto& [k, v] : overrides) {
    if (k == "preset") continue;
    apply_config_value(cfg, k, v, "--" + k);
  }
  cfg.validate();
  return cfg;
}

}  // namespace maskface
