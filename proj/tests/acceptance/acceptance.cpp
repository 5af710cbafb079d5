// Acceptance run: one [PASS]/[FAIL] line per criterion, exit 1 on any failure.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "maskface/errors.hpp"
#include "maskface/gradcheck.hpp"
#include "maskface/ops.hpp"
#include "maskface/optim.hpp"
#include "maskface/trainer.hpp"
#include "test_util.hpp"

using namespace maskface;
namespace fs = std::filesystem;

namespace {

constexpr float kGradTolerance = 1.5e-2f;
constexpr double kGradSeconds = 60.0;
constexpr double kArchitectureSeconds = 60.0;
constexpr double kOptimizerTolerance = 1e-6;
constexpr double kMetricsTolerance = 1e-6;
constexpr double kSmokeLossBand = 0.15;
constexpr float kSmokeAccuracy = 0.95f;
constexpr int kSmokeEpochs = 30;
constexpr double kSmokeSeconds = 600.0;
constexpr int kCorruptionTrials = 100;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " FAILED(" << what << ")";
    }
  }
};

bool same_bytes(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data().data(), b.data().data(), static_cast<std::size_t>(a.numel()) * sizeof(float)) == 0;
}

void gradient_suite(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  const auto cases = run_grad_check_suite();
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  float worst = 0.0f;
  std::set<std::string> names;
  for (const auto& c : cases) {
    worst = std::max(worst, c.max_rel_error);
    names.insert(c.name);
  }
  for (const char* required : {"conv2d", "batchnorm2d_train", "batchnorm2d_eval", "max_pool2d", "global_avg_pool",
                               "linear", "relu", "softmax_cross_entropy", "bottleneck_identity_train",
                               "bottleneck_projection_eval", "two_block_network"}) {
    o.require(names.contains(required), std::string("case ") + required);
  }
  o.require(worst < kGradTolerance, "max relative error");
  o.require(seconds < kGradSeconds, "runtime");
  o.detail << cases.size() << " cases, max_rel_error=" << worst << ", " << seconds << " s";
}

void architecture(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  Resnet50Model imagenet = build_resnet50(1000, 0.5f, 0);
  const auto total = imagenet.param_count(false);
  std::int64_t head = 0;
  for (const auto& nt : imagenet.child_parameters("fc")) head += nt.tensor.numel();
  o.require(total == 25557032, "total parameters");
  o.require(total - head == 23508032, "backbone parameters");

  Resnet50Model model = build_resnet50(77, 0.5f, 1);
  Prng rng(2);
  Tensor x = testutil::random_tensor({1, 3, 180, 180}, rng, -2.0f, 2.0f);
  Prng unused(0);
  o.require(model.features(x, false).shape() == Shape{1, 2048, 6, 6}, "feature shape");
  o.require(model.forward(x, false, unused).shape() == Shape{1, 77}, "logit shape");
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(seconds < kArchitectureSeconds, "runtime");
  o.detail << "params=" << total << " backbone=" << total - head << ", " << seconds << " s";
}

void residual_identity(Outcome& o) {
  Resnet50Model model = build_resnet50(10, 0.5f, 3);
  Prng rng(4);
  int blocks = 0;
  for (std::size_t s = 0; s < 4; ++s) {
    for (auto& block : model.stage(s)) {
      if (block.spec.has_projection) continue;
      for (auto& v : block.params.bn3.weight.data()) v = 0.0f;
      Tensor x = testutil::random_tensor({2, block.spec.in_channels, 5, 5}, rng, 0.0f, 4.0f);
      for (bool training : {false, true}) {
        Tensor y = bottleneck_forward(block.spec, block.params, x, training);
        o.require(same_bytes(x, y), "stage " + std::to_string(s + 1) + (training ? " train" : " eval"));
      }
      ++blocks;
    }
  }
  o.require(blocks == 12, "identity block count");
  o.detail << blocks << " identity blocks exact in both modes";
}

void freezing(Outcome& o) {
  for (int depth : {10, 7}) {
    Resnet50Model model = build_resnet50(4, 0.0f, 5);
    model.freeze_children(depth);
    std::set<std::string> expected;
    for (const auto& nt : model.child_parameters("fc")) expected.insert(nt.name);
    if (depth == 7) {
      for (const auto& nt : model.child_parameters("layer4")) expected.insert(nt.name);
    }
    std::set<std::string> trainable;
    for (const auto& nt : model.parameters()) {
      if (nt.tensor.requires_grad()) trainable.insert(nt.name);
    }
    o.require(trainable == expected, "trainable set at depth " + std::to_string(depth));

    const auto is_live = [&](const std::string& name) {
      return name.starts_with("fc.") || (depth == 7 && name.starts_with("layer4."));
    };
    std::vector<std::pair<std::string, Tensor>> frozen;
    for (const auto& nt : model.state()) {
      if (!is_live(nt.name)) frozen.emplace_back(nt.name, nt.tensor.clone());
    }
    Adam opt(model.parameters(), AdamConfig{});
    Prng rng(6);
    const std::vector<int> targets = {0, 3};
    for (int step = 0; step < 5; ++step) {
      Tensor x = testutil::random_tensor({2, 3, 40, 40}, rng, -2.0f, 2.0f);
      Tape tape;
      backward(softmax_cross_entropy(model.forward(x, true, rng, &tape), targets, &tape), tape);
      opt.step(1e-2f);
      opt.zero_grad();
    }
    std::size_t changed = 0;
    for (const auto& [name, before] : frozen) {
      for (const auto& nt : model.state()) {
        if (nt.name == name && !same_bytes(nt.tensor, before)) ++changed;
      }
    }
    o.require(changed == 0, "frozen bytes at depth " + std::to_string(depth));
    o.detail << (depth == 10 ? "" : "; ") << "depth " << depth << ": " << trainable.size() << " trainable, "
             << frozen.size() << " frozen tensors unchanged";
  }
}

void optimizer_oracles(Outcome& o) {
  Tensor p = Tensor::from_data({1}, {1.0f}, true);
  Sgd sgd({{"p", p}}, SgdConfig{0.9f, true});
  double expect = 1.0, v = 0.0, worst = 0.0;
  for (int i = 0; i < 3; ++i) {
    p.ensure_grad()[0] = 0.5f;
    sgd.step(0.1f);
    v = 0.9 * v + 0.5;
    expect -= 0.1 * (0.5 + 0.9 * v);
    if (i == 0) o.require(std::abs(p.data()[0] - 0.905) < kOptimizerTolerance, "sgd first step");
    worst = std::max(worst, std::abs(p.data()[0] - expect));
  }

  Tensor q = Tensor::from_data({1}, {1.0f}, true);
  Adam adam({{"q", q}}, AdamConfig{});
  double m = 0.0, s = 0.0;
  expect = 1.0;
  for (int t = 1; t <= 3; ++t) {
    q.ensure_grad()[0] = 0.5f;
    adam.step(0.0016f);
    m = 0.9 * m + 0.1 * 0.5;
    s = 0.999 * s + 0.001 * 0.25;
    expect -= 0.0016 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(s / (1 - std::pow(0.999, t))) + 1e-8);
    if (t == 1) o.require(std::abs(q.data()[0] - 0.99840) < kOptimizerTolerance, "adam first step");
    worst = std::max(worst, std::abs(q.data()[0] - expect));
  }
  o.require(worst < kOptimizerTolerance, "three-step traces");
  o.detail << "max deviation " << worst;
}

void schedule(Outcome& o) {
  const StepLrSchedule unmasked{0.002, 0.11, 14};
  const StepLrSchedule masked{0.0016, 0.1, 14};
  o.require(lr_at_epoch(unmasked, 0) == 0.002f && lr_at_epoch(unmasked, 13) == 0.002f, "unmasked base");
  o.require(lr_at_epoch(unmasked, 14) == 0.00022f, "unmasked decay");
  o.require(lr_at_epoch(masked, 13) == 0.0016f, "masked base");
  o.require(lr_at_epoch(masked, 14) == 0.00016f, "masked decay");
  o.detail << "epoch 14: " << lr_at_epoch(unmasked, 14) << ", " << lr_at_epoch(masked, 14);
}

void dataset_rules(Outcome& o) {
  testutil::TempDir dir;
  testutil::make_class_tree(dir / "data", {{"A", 10}, {"B", 7}, {"C", 8}}, 9);
  const auto index = scan_dataset(dir / "data", 8);
  o.require(index.classes == std::vector<std::string>{"A", "C"}, "min_count filter");
  const auto split = split_dataset(index, 0.7, 2);
  o.require(split.train[0].size() == 7 && split.val[0].size() == 3, "split of 10");
  o.require(split.train[1].size() == 5 && split.val[1].size() == 3, "split of 8");
  const auto again = split_dataset(scan_dataset(dir / "data", 8), 0.7, 2);
  o.require(again.train == split.train && again.val == split.val, "split determinism");

  PreprocessConfig cfg;
  const auto samples = split.train_samples(index);
  Prng a(3), b(3);
  Tensor x = make_batch(samples, cfg, &a);
  Tensor y = make_batch(samples, cfg, &b);
  o.require(x.shape() == Shape{12, 3, 180, 180}, "batch shape");
  o.require(same_bytes(x, y), "augmentation determinism");
  o.require(load_sample(samples[0].path, cfg, nullptr).shape() == Shape{3, 180, 180}, "sample shape");

  const Tensor golden = load_sample(testutil::fixture("golden.ppm"), cfg, nullptr);
  const auto reference = load_checkpoint(testutil::fixture("golden_180.rsn5"));
  o.require(same_bytes(golden, reference.at("image")), "golden pipeline");
  o.detail << "classes {A,C}, splits 7/3 and 5/3, golden 180x180 bit-exact";
}

void metrics_oracle(Outcome& o) {
  Prng rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    ConfusionMatrix cm(k, std::vector<std::int64_t>(k, 0));
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    const std::size_t n = 1 + rng.below(300);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t t = rng.below(k);
      const std::size_t p = rng.uniform() < 0.6f ? t : rng.below(k);
      pairs.emplace_back(t, p);
      ++cm[t][p];
    }
    const auto m = metrics_from_confusion(cm);
    std::size_t correct = 0, present = 0;
    double mp = 0, mr = 0, mf = 0;
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t tp = 0, fp = 0, fn = 0;
      for (const auto& [t, p] : pairs) {
        tp += t == c && p == c;
        fp += t != c && p == c;
        fn += t == c && p != c;
      }
      const double prec = tp + fp ? double(tp) / double(tp + fp) : 0.0;
      const double rec = tp + fn ? double(tp) / double(tp + fn) : 0.0;
      const double f1 = prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
      worst = std::max({worst, std::abs(m.precision[c] - prec), std::abs(m.recall[c] - rec), std::abs(m.f1[c] - f1)});
      if (tp + fn > 0) {
        ++present;
        mp += prec;
        mr += rec;
        mf += f1;
      }
    }
    for (const auto& [t, p] : pairs) correct += t == p;
    worst = std::max({worst, std::abs(m.accuracy - double(correct) / double(n)),
                      std::abs(m.macro_precision - mp / double(present)),
                      std::abs(m.macro_recall - mr / double(present)), std::abs(m.macro_f1 - mf / double(present))});
  }
  o.require(worst < kMetricsTolerance, "brute-force agreement");
  o.detail << "100 matrices, max deviation " << worst;
}

void end_to_end_smoke(Outcome& o) {
  const auto start = std::chrono::steady_clock::now();
  testutil::TempDir dir;
  testutil::make_color_classes(dir / "data", 10, 64, 42);
  const auto index = scan_dataset(dir / "data", 1);
  const auto split = split_dataset(index, 0.7, 1);
  const auto train = split.train_samples(index);
  const auto val = split.val_samples(index);

  TrainConfig cfg = TrainConfig::masked();
  cfg.batch_size = 8;
  cfg.base_lr = 1e-3;
  cfg.epochs = kSmokeEpochs;
  cfg.seed = 7;
  cfg.record_wall_time = false;
  cfg.checkpoint_out = dir / "best.rsn5";
  PreprocessConfig pre;
  pre.target_size = 64;

  Resnet50Model model = build_resnet50(5, cfg.dropout_p, 7);
  const auto history = train_loop(cfg, model, train, val, pre);

  const double ln5 = std::log(5.0);
  const double loss0 = history.front().train_loss;
  o.require(std::abs(loss0 - ln5) <= kSmokeLossBand * ln5, "epoch-0 loss");
  int reached = -1;
  float best_train = 0.0f, best_val = -1.0f;
  for (const auto& r : history) {
    if (reached < 0 && r.train_accuracy >= kSmokeAccuracy) reached = r.epoch;
    best_train = std::max(best_train, r.train_accuracy);
    best_val = std::max(best_val, r.val_accuracy);
  }
  o.require(reached >= 0, "train accuracy");

  export_history(history, dir / "history.csv");
  const auto bytes = testutil::read_bytes(dir / "history.csv");
  const auto parsed = parse_history_csv(std::string(bytes.begin(), bytes.end()));
  bool csv_ok = parsed.size() == history.size();
  for (std::size_t i = 0; csv_ok && i < parsed.size(); ++i) {
    csv_ok = parsed[i].epoch == history[i].epoch &&
             std::abs(parsed[i].train_loss - history[i].train_loss) <= 1e-5f * std::abs(history[i].train_loss) &&
             std::abs(parsed[i].val_accuracy - history[i].val_accuracy) <= 1e-5f;
  }
  o.require(csv_ok, "history csv round trip");

  Resnet50Model best = model_from_checkpoint(load_checkpoint(cfg.checkpoint_out), cfg.dropout_p);
  const auto report = evaluate(best, val, cfg.batch_size, pre);
  o.require(static_cast<float>(report.accuracy) == best_val, "checkpoint reproduces best val accuracy");

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  o.require(seconds < kSmokeSeconds, "runtime");
  o.detail << "epoch-0 loss " << loss0 << " (ln5 " << ln5 << "), train acc >= " << kSmokeAccuracy << " at epoch "
           << reached << ", best train " << best_train << ", best val " << best_val << ", " << seconds << " s";
}

void checkpoint_robustness(Outcome& o) {
  testutil::TempDir dir;
  Resnet50Model model = build_resnet50(5, 0.4f, 11);
  Prng rng(12);
  for (auto& nt : model.buffers()) {
    for (auto& v : nt.tensor.data()) v = rng.uniform() + 0.5f;
  }
  save_checkpoint(model, dir / "m.rsn5");
  auto bytes = testutil::read_bytes(dir / "m.rsn5");

  const auto loaded = load_checkpoint(dir / "m.rsn5");
  bool round_trip = loaded.size() == model.state().size();
  for (const auto& nt : model.state()) round_trip = round_trip && same_bytes(loaded.at(nt.name), nt.tensor);
  o.require(round_trip, "bitwise round trip");
  Resnet50Model again = model_from_checkpoint(loaded, 0.4f);
  save_checkpoint(again, dir / "again.rsn5");
  o.require(testutil::read_bytes(dir / "again.rsn5") == bytes, "re-save identical");

  int crc_rejections = 0;
  for (int trial = 0; trial < kCorruptionTrials; ++trial) {
    const std::size_t at = 4 + rng.below(bytes.size() - 4);
    const std::uint8_t original = bytes[at];
    bytes[at] = static_cast<std::uint8_t>(original ^ (1 + rng.below(255)));
    try {
      decode_checkpoint(bytes);
    } catch (const FormatError& e) {
      if (e.kind() == FormatError::Kind::kCrcMismatch) ++crc_rejections;
    }
    bytes[at] = original;
  }
  o.require(crc_rejections == kCorruptionTrials, "corruptions rejected by CRC");
  o.detail << crc_rejections << "/" << kCorruptionTrials << " corruptions rejected by CRC, " << bytes.size()
           << "-byte file round-trips bitwise";
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient suite", gradient_suite},
      {"architecture oracle", architecture},
      {"residual identity", residual_identity},
      {"freezing", freezing},
      {"optimizer oracles", optimizer_oracles},
      {"lr schedule", schedule},
      {"dataset rules", dataset_rules},
      {"metrics oracle", metrics_oracle},
      {"end-to-end smoke", end_to_end_smoke},
      {"checkpoint robustness", checkpoint_robustness},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " threw: " << e.what();
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS] " : "[FAIL] ") << i + 1 << ". " << criteria[i].first << ": " << o.detail.str()
              << std::endl;
  }
  std::cout << (criteria.size() - failures) << "/" << criteria.size() << " criteria passed" << std::endl;
  return failures == 0 ? 0 : 1;
}
