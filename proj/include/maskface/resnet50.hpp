#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskface/prng.hpp"
#include "maskface/tape.hpp"
#include "maskface/tensor.hpp"

namespace maskface {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Shape of one bottleneck block: 1x1 reduce to `mid_channels`, 3x3 at
/// `stride`, 1x1 expand to 4 * mid_channels.
struct BottleneckSpec {
  int in_channels = 0;
  int mid_channels = 0;
  int out_channels = 0;
  int stride = 1;
  bool has_projection = false;

  /// Derives out_channels and has_projection from the block rules.
  static BottleneckSpec make(int in_channels, int mid_channels, int stride);
  /// Throws ParameterError when the invariants do not hold.
  void validate() const;
};

struct Conv2dLayer {
  Tensor weight;
  int stride = 1;
  int padding = 0;

  Tensor forward(const Tensor& x, Tape* tape) const;
};

/// Batch-norm parameters (weight = gamma, bias = beta) and running buffers.
/// A layer whose weight is frozen normalizes with running statistics even
/// in training mode.
struct BatchNormLayer {
  Tensor weight;
  Tensor bias;
  Tensor running_mean;
  Tensor running_var;

  static BatchNormLayer make(int channels);
  Tensor forward(const Tensor& x, bool training, Tape* tape);
};

struct BottleneckParams {
  Conv2dLayer conv1, conv2, conv3;
  BatchNormLayer bn1, bn2, bn3;
  std::optional<Conv2dLayer> downsample_conv;
  std::optional<BatchNormLayer> downsample_bn;

  static BottleneckParams init(const BottleneckSpec& spec, Prng& rng);
  /// Parameters and buffers in state order, names relative to the block.
  std::vector<NamedTensor> state(const std::string& prefix) const;
};

/// relu(R(x) + S(x)): R is the conv/bn residual branch, S the identity or
/// the 1x1 projection when the block changes shape.
Tensor bottleneck_forward(const BottleneckSpec& spec, BottleneckParams& params, const Tensor& x, bool training,
                          Tape* tape = nullptr);

struct Bottleneck {
  BottleneckSpec spec;
  BottleneckParams params;
};

/// He-uniform (fan-in) sample, bound sqrt(6 / fan_in).
Tensor he_uniform(Shape shape, std::int64_t fan_in, Prng& rng);

class Resnet50Model {
 public:
  static constexpr std::array<std::string_view, 10> kChildren = {
      "conv1", "bn1", "relu", "maxpool", "layer1", "layer2", "layer3", "layer4", "avgpool", "fc"};
  static constexpr std::array<int, 4> kStageBlocks = {3, 4, 6, 3};
  static constexpr std::array<int, 4> kStageMidChannels = {64, 128, 256, 512};
  static constexpr int kFeatureChannels = 2048;
  static constexpr std::int64_t kMinInputExtent = 33;

  Resnet50Model(int num_classes, float dropout_p, std::uint64_t init_seed);
  // Tensors are shared handles; a copy would alias every parameter.
  Resnet50Model(const Resnet50Model&) = delete;
  Resnet50Model& operator=(const Resnet50Model&) = delete;
  Resnet50Model(Resnet50Model&&) = default;
  Resnet50Model& operator=(Resnet50Model&&) = default;

  int num_classes() const noexcept { return num_classes_; }
  float dropout_p() const noexcept { return dropout_p_; }

  /// Backbone through layer4: (N,3,H,W) -> (N,2048,H',W').
  Tensor features(const Tensor& x, bool training, Tape* tape = nullptr);
  /// Logits (N, num_classes). Dropout between pooling and fc only when training.
  Tensor forward(const Tensor& x, bool training, Prng& rng, Tape* tape = nullptr);

  /// Trainable and frozen parameters, in state order.
  std::vector<NamedTensor> parameters() const;
  /// Batch-norm running statistics.
  std::vector<NamedTensor> buffers() const;
  /// Parameters interleaved with buffers per layer; checkpoint order.
  std::vector<NamedTensor> state() const;
  std::vector<NamedTensor> child_parameters(std::string_view child) const;

  /// Freezes the parameters of the first n children; the classification head
  /// stays trainable.
  void freeze_children(int n);
  std::int64_t param_count(bool trainable_only) const;

  /// Fresh head for `num_classes`, initialized from `init_seed`.
  void replace_head(int num_classes, float dropout_p, std::uint64_t init_seed);

  std::vector<Bottleneck>& stage(std::size_t i) { return layers_.at(i); }
  const std::vector<Bottleneck>& stage(std::size_t i) const { return layers_.at(i); }
  int convolution_count() const;

 private:
  int num_classes_;
  float dropout_p_;
  Conv2dLayer conv1_;
  BatchNormLayer bn1_;
  std::array<std::vector<Bottleneck>, 4> layers_;
  Tensor fc_weight_;
  Tensor fc_bias_;
};

Resnet50Model build_resnet50(int num_classes, float dropout_p, std::uint64_t init_seed);

/// The ten top-level children in order.
std::vector<std::string> model_children(const Resnet50Model& model);

}  // namespace maskface
