#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "maskface/dataset.hpp"
#include "maskface/metrics.hpp"
#include "maskface/resnet50.hpp"

namespace maskface {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind kind);

/// One training run. Defaults are the unmasked-face experiment.
struct TrainConfig {
  int batch_size = 256;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  float dropout_p = 0.5f;
  double base_lr = 0.002;
  double lr_gamma = 0.11;
  int lr_step_size = 14;
  int epochs = 20;
  int freeze_children = 10;
  float momentum = 0.9f;
  bool nesterov = true;
  std::uint64_t seed = 0;
  /// When false, wall_seconds is recorded as 0 so histories are reproducible.
  bool record_wall_time = true;
  std::filesystem::path data_root;
  std::filesystem::path checkpoint_in;
  /// Best-validation-accuracy checkpoint; empty disables saving.
  std::filesystem::path checkpoint_out;

  static TrainConfig unmasked();
  static TrainConfig masked();

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  float train_loss = 0.0f;
  float train_accuracy = 0.0f;
  float val_loss = 0.0f;
  float val_accuracy = 0.0f;
  float lr = 0.0f;
  float wall_seconds = 0.0f;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Shuffled mini-batch training with a validation pass after every epoch;
/// returns exactly cfg.epochs records.
std::vector<EpochRecord> train_loop(const TrainConfig& cfg, Resnet50Model& model, std::span<const Sample> train,
                                    std::span<const Sample> val, const PreprocessConfig& preprocess,
                                    const EpochCallback& on_epoch = {});

/// Eval-mode pass over `samples`; argmax predictions into a confusion matrix
/// of model.num_classes() classes.
MetricsReport evaluate(Resnet50Model& model, std::span<const Sample> samples, int batch_size,
                       const PreprocessConfig& preprocess);

/// Header `epoch,lr,train_loss,train_acc,val_loss,val_acc,wall_seconds`,
/// values with 6 significant digits, LF line endings.
std::string history_csv(std::span<const EpochRecord> records);
void export_history(std::span<const EpochRecord> records, const std::filesystem::path& path);
std::vector<EpochRecord> parse_history_csv(const std::string& text);

}  // namespace maskface
