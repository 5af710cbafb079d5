#include "maskface/cli.hpp"

#include <algorithm>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "maskface/checkpoint.hpp"
#include "maskface/config.hpp"
#include "maskface/errors.hpp"
#include "maskface/gradcheck.hpp"
#include "maskface/trainer.hpp"

namespace maskface {

namespace fs = std::filesystem;

namespace {

constexpr float kGradCheckTolerance = 1.5e-2f;

struct Invocation {
  std::string command;
  std::optional<fs::path> config_file;
  ConfigOverrides overrides;
};

Invocation parse_args(std::span<const std::string> args) {
  if (args.empty()) throw ConfigError("missing command");
  Invocation inv;
  inv.command = args[0];
  for (std::size_t i = 1; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0 || a.size() == 2) throw ConfigError("unexpected argument '" + a + "'");
    std::string key = a.substr(2);
    std::string value;
    if (auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.erase(eq);
    } else {
      if (i + 1 >= args.size()) throw ConfigError("missing value for --" + key);
      value = args[++i];
    }
    std::replace(key.begin(), key.end(), '-', '_');
    if (key == "config") {
      inv.config_file = value;
      continue;
    }
    const auto& keys = config_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw ConfigError("--" + key + ": unknown key");
    inv.overrides.emplace_back(key, value);
  }
  return inv;
}

void require_dir(const fs::path& p, const char* what) {
  if (p.empty()) throw IoError(std::string(what) + " is not set");
  if (!fs::is_directory(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

void require_file(const fs::path& p, const char* what) {
  if (p.empty()) throw IoError(std::string(what) + " is not set");
  if (!fs::is_regular_file(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

int cmd_scan(const CliConfig& cfg, std::ostream& out) {
  require_dir(cfg.train.data_root, "data_root");
  const DatasetIndex index = scan_dataset(cfg.train.data_root, cfg.min_images);
  const auto rows = class_histogram(index);
  fs::create_directories(cfg.output_dir);
  write_histogram_csv(cfg.output_dir / "class_histogram.csv", rows);
  out << "classes=" << index.num_classes() << '\n' << "images=" << index.total_files() << '\n';
  out << histogram_csv(rows);
  return kExitOk;
}

Resnet50Model initial_model(const CliConfig& cfg, int num_classes, std::ostream& out) {
  if (cfg.train.checkpoint_in.empty()) {
    return build_resnet50(num_classes, cfg.train.dropout_p, cfg.train.seed);
  }
  require_file(cfg.train.checkpoint_in, "checkpoint_in");
  const TensorMap pretrained = load_checkpoint(cfg.train.checkpoint_in);
  Resnet50Model model(num_classes, cfg.train.dropout_p, cfg.train.seed);
  const LoadReport report = adapt_head(model, pretrained, num_classes, cfg.train.dropout_p, cfg.train.seed);
  out << "pretrained: loaded=" << report.loaded.size() << " reinitialized=" << report.reinitialized.size()
      << " ignored=" << report.ignored.size() << '\n';
  return model;
}

int cmd_train(const CliConfig& cfg, std::ostream& out) {
  require_dir(cfg.train.data_root, "data_root");
  const DatasetIndex index = scan_dataset(cfg.train.data_root, cfg.min_images);
  const SplitAssignment split = split_dataset(index, cfg.train_fraction, cfg.train.seed);
  const auto train = split.train_samples(index);
  const auto val = split.val_samples(index);
  const auto num_classes = static_cast<int>(index.num_classes());

  Resnet50Model model = initial_model(cfg, num_classes, out);
  fs::create_directories(cfg.output_dir);
  TrainConfig tc = cfg.train;
  tc.checkpoint_out = cfg.output_dir / "best.rsn5";
  const PreprocessConfig pre = cfg.preprocess();

  out << "train=" << train.size() << " val=" << val.size() << " classes=" << num_classes
      << " optimizer=" << optimizer_name(tc.optimizer) << '\n';
  const auto history = train_loop(tc, model, train, val, pre, [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << " lr=" << r.lr << " train_loss=" << r.train_loss << " train_acc=" << r.train_accuracy
        << " val_loss=" << r.val_loss << " val_acc=" << r.val_accuracy << '\n';
  });
  export_history(history, cfg.output_dir / "history.csv");

  Resnet50Model best = model_from_checkpoint(load_checkpoint(tc.checkpoint_out), tc.dropout_p);
  const MetricsReport report = evaluate(best, val, tc.batch_size, pre);
  write_metrics(cfg.output_dir / "metrics.txt", report, index.classes);
  out << "best_val_accuracy=" << report.accuracy << '\n';
  return kExitOk;
}

int cmd_evaluate(const CliConfig& cfg, std::ostream& out) {
  require_dir(cfg.train.data_root, "data_root");
  require_file(cfg.train.checkpoint_in, "checkpoint_in");
  const DatasetIndex index = scan_dataset(cfg.train.data_root, cfg.min_images);
  const SplitAssignment split = split_dataset(index, cfg.train_fraction, cfg.train.seed);
  const auto val = split.val_samples(index);
  Resnet50Model model = model_from_checkpoint(load_checkpoint(cfg.train.checkpoint_in), cfg.train.dropout_p);
  if (model.num_classes() != static_cast<int>(index.num_classes())) {
    throw ContractError("checkpoint has " + std::to_string(model.num_classes()) + " classes but " +
                        cfg.train.data_root.string() + " has " + std::to_string(index.num_classes()));
  }
  const MetricsReport report = evaluate(model, val, cfg.train.batch_size, cfg.preprocess());
  fs::create_directories(cfg.output_dir);
  write_metrics(cfg.output_dir / "metrics.txt", report, index.classes);
  out << format_metrics(report, index.classes);
  return kExitOk;
}

int cmd_grad_check(std::ostream& out) {
  const auto cases = run_grad_check_suite();
  float worst = 0.0f;
  for (const auto& c : cases) {
    out << std::left << std::setw(36) << c.name << ' ' << std::scientific << std::setprecision(3) << c.max_rel_error
        << '\n';
    worst = std::max(worst, c.max_rel_error);
  }
  out << "max_rel_error=" << std::scientific << std::setprecision(3) << worst << '\n';
  return worst < kGradCheckTolerance ? kExitOk : kExitFailure;
}

}  // namespace

std::string cli_usage() {
  std::ostringstream u;
  u << "usage: maskface <scan|train|evaluate|grad-check> [--config PATH] [--key value ...]\n"
    << "keys:";
  for (const auto& k : config_keys()) u << ' ' << k;
  u << "\nMASKFACE_SEED overrides the seed from the config file.\n";
  return u.str();
}

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err,
            const std::optional<std::string>& env_seed) {
  static const std::vector<std::string> commands = {"scan", "train", "evaluate", "grad-check"};
  if (args.empty() || args[0] == "--help" || args[0] == "-h") {
    (args.empty() ? err : out) << cli_usage();
    return args.empty() ? kExitUsage : kExitOk;
  }
  if (std::find(commands.begin(), commands.end(), args[0]) == commands.end()) {
    err << "unknown command '" << args[0] << "'\n" << cli_usage();
    return kExitUsage;
  }

  CliConfig cfg;
  std::string command;
  try {
    const Invocation inv = parse_args(args);
    command = inv.command;
    cfg = parse_config(inv.config_file, inv.overrides, env_seed);
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (command == "scan") return cmd_scan(cfg, out);
    if (command == "train") return cmd_train(cfg, out);
    if (command == "evaluate") return cmd_evaluate(cfg, out);
    return cmd_grad_check(out);
  } catch (const std::exception& e) {
    err << command << " failed: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace maskface
