#include "maskface/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <numeric>
#include <sstream>

#include "maskface/checkpoint.hpp"
#include "maskface/errors.hpp"
#include "maskface/ops.hpp"
#include "maskface/optim.hpp"

namespace maskface {

std::string_view optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kSgd ? "sgd" : "adam"; }

TrainConfig TrainConfig::unmasked() { return TrainConfig{}; }

TrainConfig TrainConfig::masked() {
  TrainConfig cfg;
  cfg.batch_size = 32;
  cfg.optimizer = OptimizerKind::kAdam;
  cfg.dropout_p = 0.4f;
  cfg.base_lr = 0.0016;
  cfg.lr_gamma = 0.1;
  cfg.lr_step_size = 14;
  cfg.epochs = 25;
  cfg.freeze_children = 7;
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (freeze_children < 0 || freeze_children > 10) throw ConfigError("freeze_children must be in [0,10]");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ConfigError("dropout must be in [0,1)");
  if (!(base_lr > 0.0)) throw ConfigError("lr must be > 0");
  if (!(lr_gamma > 0.0 && lr_gamma <= 1.0)) throw ConfigError("lr_gamma must be in (0,1]");
  if (lr_step_size < 1) throw ConfigError("lr_step_size must be >= 1");
  if (!(momentum >= 0.0f && momentum < 1.0f)) throw ConfigError("momentum must be in [0,1)");
}

namespace {

enum class Stream : std::uint64_t { kShuffle = 1, kFlip = 2, kDropout = 3 };

Prng stream_rng(std::uint64_t seed, Stream stream, int epoch) {
  Prng mix(seed ^ (static_cast<std::uint64_t>(stream) << 48) ^ static_cast<std::uint64_t>(epoch));
  return Prng(mix.next());
}

std::vector<int> labels_of(std::span<const Sample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

void check_labels(std::span<const Sample> samples, int num_classes, const char* which) {
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes) {
      throw ContractError(std::string(which) + " label " + std::to_string(s.label) + " does not fit a " +
                          std::to_string(num_classes) + "-class head");
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(const TrainConfig& cfg, std::vector<NamedTensor> params) {
  if (cfg.optimizer == OptimizerKind::kSgd) {
    return std::make_unique<Sgd>(std::move(params), SgdConfig{cfg.momentum, cfg.nesterov});
  }
  return std::make_unique<Adam>(std::move(params), AdamConfig{});
}

struct EvalTotals {
  double loss_sum = 0.0;
  ConfusionMatrix confusion;
};

EvalTotals eval_pass(Resnet50Model& model, std::span<const Sample> samples, int batch_size,
                     const PreprocessConfig& preprocess) {
  const auto k = static_cast<std::size_t>(model.num_classes());
  EvalTotals totals;
  totals.confusion.assign(k, std::vector<std::int64_t>(k, 0));
  Prng unused(0);
  for (std::size_t start = 0; start < samples.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto batch = samples.subspan(start, std::min<std::size_t>(batch_size, samples.size() - start));
    const auto targets = labels_of(batch);
    Tensor logits = model.forward(make_batch(batch, preprocess, nullptr), false, unused);
    totals.loss_sum += static_cast<double>(softmax_cross_entropy(logits, targets).item()) * batch.size();
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const int pred = argmax(logits.data().subspan(i * k, k));
      ++totals.confusion[static_cast<std::size_t>(targets[i])][static_cast<std::size_t>(pred)];
    }
  }
  return totals;
}

}  // namespace

std::vector<EpochRecord> train_loop(const TrainConfig& cfg, Resnet50Model& model, std::span<const Sample> train,
                                    std::span<const Sample> val, const PreprocessConfig& preprocess,
                                    const EpochCallback& on_epoch) {
  cfg.validate();
  preprocess.validate();
  if (train.empty() || val.empty()) throw ContractError("train_loop: train and validation splits must be non-empty");
  int max_label = 0;
  for (const auto& s : train) max_label = std::max(max_label, s.label);
  if (max_label + 1 != model.num_classes()) {
    throw ContractError("train_loop: model head has " + std::to_string(model.num_classes()) +
                        " classes but the training split has " + std::to_string(max_label + 1));
  }
  check_labels(train, model.num_classes(), "train");
  check_labels(val, model.num_classes(), "validation");

  model.freeze_children(cfg.freeze_children);
  auto optimizer = make_optimizer(cfg, model.parameters());
  const StepLrSchedule schedule{cfg.base_lr, cfg.lr_gamma, cfg.lr_step_size};
  const auto k = static_cast<std::size_t>(model.num_classes());

  std::vector<EpochRecord> history;
  float best_val_accuracy = -1.0f;
  std::vector<std::size_t> order(train.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    const float lr = lr_at_epoch(schedule, epoch);

    std::iota(order.begin(), order.end(), 0);
    Prng shuffle = stream_rng(cfg.seed, Stream::kShuffle, epoch);
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[shuffle.below(i + 1)]);
    Prng flips = stream_rng(cfg.seed, Stream::kFlip, epoch);
    Prng drop = stream_rng(cfg.seed, Stream::kDropout, epoch);

    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<Sample> batch;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(train[order[i]]);
      const auto targets = labels_of(batch);

      Tape tape;
      Tensor logits = model.forward(make_batch(batch, preprocess, &flips), true, drop, &tape);
      Tensor loss = softmax_cross_entropy(logits, targets, &tape);
      backward(loss, tape);
      optimizer->step(lr);
      optimizer->zero_grad();

      loss_sum += static_cast<double>(loss.item()) * batch.size();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        if (argmax(logits.data().subspan(i * k, k)) == targets[i]) ++correct;
      }
    }

    const auto totals = eval_pass(model, val, cfg.batch_size, preprocess);
    const auto val_metrics = metrics_from_confusion(totals.confusion);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = static_cast<float>(loss_sum / static_cast<double>(train.size()));
    rec.train_accuracy = static_cast<float>(static_cast<double>(correct) / static_cast<double>(train.size()));
    rec.val_loss = static_cast<float>(totals.loss_sum / static_cast<double>(val.size()));
    rec.val_accuracy = static_cast<float>(val_metrics.accuracy);
    if (cfg.record_wall_time) {
      rec.wall_seconds = std::chrono::duration<float>(std::chrono::steady_clock::now() - started).count();
    }
    if (rec.val_accuracy > best_val_accuracy) {
      best_val_accuracy = rec.val_accuracy;
      if (!cfg.checkpoint_out.empty()) save_checkpoint(model, cfg.checkpoint_out);
    }
    history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return history;
}

MetricsReport evaluate(Resnet50Model& model, std::span<const Sample> samples, int batch_size,
                       const PreprocessConfig& preprocess) {
  if (samples.empty()) throw ContractError("evaluate: no samples");
  if (batch_size < 1) throw ParameterError("evaluate: batch_size must be >= 1");
  check_labels(samples, model.num_classes(), "evaluation");
  return metrics_from_confusion(eval_pass(model, samples, batch_size, preprocess).confusion);
}

// ---------------------------------------------------------------------------

std::string history_csv(std::span<const EpochRecord> records) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << "epoch,lr,train_loss,train_acc,val_loss,val_acc,wall_seconds\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << r.lr << ',' << r.train_loss << ',' << r.train_accuracy << ',' << r.val_loss << ','
        << r.val_accuracy << ',' << r.wall_seconds << '\n';
  }
  return out.str();
}

void export_history(std::span<const EpochRecord> records, const std::filesystem::path& path) {
  if (records.empty()) throw ContractError("export_history: no records");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << history_csv(records);
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<EpochRecord> parse_history_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,lr,train_loss,train_acc,val_loss,val_acc,wall_seconds") {
    throw FormatError(FormatError::Kind::kBadHeader, "history csv: unexpected header");
  }
  std::vector<EpochRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(row, field, ',')) fields.push_back(field);
    if (fields.size() != 7) throw FormatError(FormatError::Kind::kBadHeader, "history csv: expected 7 columns");
    EpochRecord r;
    r.epoch = std::stoi(fields[0]);
    r.lr = std::stof(fields[1]);
    r.train_loss = std::stof(fields[2]);
    r.train_accuracy = std::stof(fields[3]);
    r.val_loss = std::stof(fields[4]);
    r.val_accuracy = std::stof(fields[5]);
    r.wall_seconds = std::stof(fields[6]);
    out.push_back(r);
  }
  return out;
}

}  // namespace maskface
