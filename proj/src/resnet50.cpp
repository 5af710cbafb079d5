#include "maskface/resnet50.hpp"

#include <cmath>

#include "maskface/errors.hpp"
#include "maskface/ops.hpp"

namespace maskface {

namespace {

bool is_buffer_name(std::string_view name) {
  return name.ends_with("running_mean") || name.ends_with("running_var");
}

void append_bn(std::vector<NamedTensor>& out, const std::string& prefix, const BatchNormLayer& bn) {
  out.push_back({prefix + ".weight", bn.weight});
  out.push_back({prefix + ".bias", bn.bias});
  out.push_back({prefix + ".running_mean", bn.running_mean});
  out.push_back({prefix + ".running_var", bn.running_var});
}

Conv2dLayer make_conv(int out, int in, int k, int stride, int padding, Prng& rng) {
  return {he_uniform({out, in, k, k}, static_cast<std::int64_t>(in) * k * k, rng), stride, padding};
}

std::string_view child_of(std::string_view name) { return name.substr(0, name.find('.')); }

}  // namespace

BottleneckSpec BottleneckSpec::make(int in_channels, int mid_channels, int stride) {
  BottleneckSpec s;
  s.in_channels = in_channels;
  s.mid_channels = mid_channels;
  s.out_channels = 4 * mid_channels;
  s.stride = stride;
  s.has_projection = stride == 2 || in_channels != s.out_channels;
  s.validate();
  return s;
}

void BottleneckSpec::validate() const {
  if (in_channels < 1 || mid_channels < 1) throw ParameterError("bottleneck: channel counts must be positive");
  if (out_channels != 4 * mid_channels) throw ParameterError("bottleneck: out_channels must be 4 * mid_channels");
  if (stride != 1 && stride != 2) throw ParameterError("bottleneck: stride must be 1 or 2");
  if (has_projection != (stride == 2 || in_channels != out_channels)) {
    throw ParameterError("bottleneck: projection required exactly when the block changes shape");
  }
}

Tensor he_uniform(Shape shape, std::int64_t fan_in, Prng& rng) {
  const float bound = std::sqrt(6.0f / static_cast<float>(fan_in));
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.data()) v = (2.0f * rng.uniform() - 1.0f) * bound;
  return t;
}

Tensor Conv2dLayer::forward(const Tensor& x, Tape* tape) const {
  return conv2d(x, weight, Tensor(), {stride, padding}, tape);
}

BatchNormLayer BatchNormLayer::make(int channels) {
  return {Tensor::full({channels}, 1.0f, true), Tensor::zeros({channels}, true), Tensor::zeros({channels}),
          Tensor::full({channels}, 1.0f)};
}

Tensor BatchNormLayer::forward(const Tensor& x, bool training, Tape* tape) {
  BatchNormOptions opts;
  opts.training = training && weight.requires_grad();
  return batchnorm2d(x, weight, bias, running_mean, running_var, opts, tape);
}

BottleneckParams BottleneckParams::init(const BottleneckSpec& spec, Prng& rng) {
  spec.validate();
  BottleneckParams p;
  p.conv1 = make_conv(spec.mid_channels, spec.in_channels, 1, 1, 0, rng);
  p.bn1 = BatchNormLayer::make(spec.mid_channels);
  p.conv2 = make_conv(spec.mid_channels, spec.mid_channels, 3, spec.stride, 1, rng);
  p.bn2 = BatchNormLayer::make(spec.mid_channels);
  p.conv3 = make_conv(spec.out_channels, spec.mid_channels, 1, 1, 0, rng);
  p.bn3 = BatchNormLayer::make(spec.out_channels);
  if (spec.has_projection) {
    p.downsample_conv = make_conv(spec.out_channels, spec.in_channels, 1, spec.stride, 0, rng);
    p.downsample_bn = BatchNormLayer::make(spec.out_channels);
  }
  return p;
}

std::vector<NamedTensor> BottleneckParams::state(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  out.push_back({prefix + ".conv1.weight", conv1.weight});
  append_bn(out, prefix + ".bn1", bn1);
  out.push_back({prefix + ".conv2.weight", conv2.weight});
  append_bn(out, prefix + ".bn2", bn2);
  out.push_back({prefix + ".conv3.weight", conv3.weight});
  append_bn(out, prefix + ".bn3", bn3);
  if (downsample_conv) {
    out.push_back({prefix + ".downsample.0.weight", downsample_conv->weight});
    append_bn(out, prefix + ".downsample.1", *downsample_bn);
  }
  return out;
}

Tensor bottleneck_forward(const BottleneckSpec& spec, BottleneckParams& p, const Tensor& x, bool training,
                          Tape* tape) {
  if (x.rank() != 4 || x.dim(1) != spec.in_channels) {
    throw DimensionError("bottleneck: input axis 1 must have " + std::to_string(spec.in_channels) +
                         " channels, got shape " + shape_to_string(x.shape()));
  }
  Tensor r = relu(p.bn1.forward(p.conv1.forward(x, tape), training, tape), tape);
  r = relu(p.bn2.forward(p.conv2.forward(r, tape), training, tape), tape);
  r = p.bn3.forward(p.conv3.forward(r, tape), training, tape);
  Tensor shortcut = x;
  if (spec.has_projection) {
    shortcut = p.downsample_bn->forward(p.downsample_conv->forward(x, tape), training, tape);
  }
  return relu(add(r, shortcut, tape), tape);
}

// ---------------------------------------------------------------------------

Resnet50Model::Resnet50Model(int num_classes, float dropout_p, std::uint64_t init_seed)
    : num_classes_(num_classes), dropout_p_(dropout_p) {
  if (num_classes < 2) throw ParameterError("resnet50: num_classes must be >= 2");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ParameterError("resnet50: dropout must be in [0,1)");
  Prng rng(init_seed);
  conv1_ = make_conv(64, 3, 7, 2, 3, rng);
  bn1_ = BatchNormLayer::make(64);
  int in = 64;
  for (std::size_t s = 0; s < layers_.size(); ++s) {
    for (int b = 0; b < kStageBlocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      auto spec = BottleneckSpec::make(in, kStageMidChannels[s], stride);
      layers_[s].push_back({spec, BottleneckParams::init(spec, rng)});
      in = spec.out_channels;
    }
  }
  fc_weight_ = he_uniform({num_classes, kFeatureChannels}, kFeatureChannels, rng);
  fc_bias_ = Tensor::zeros({num_classes}, true);
}

Tensor Resnet50Model::features(const Tensor& x, bool training, Tape* tape) {
  if (x.rank() != 4 || x.dim(1) != 3) {
    throw DimensionError("resnet50: input must be (N,3,H,W), got " + shape_to_string(x.shape()));
  }
  if (x.dim(2) < kMinInputExtent || x.dim(3) < kMinInputExtent) {
    throw DimensionError("resnet50: spatial axes 2/3 must be >= " + std::to_string(kMinInputExtent) + ", got " +
                         shape_to_string(x.shape()));
  }
  Tensor h = relu(bn1_.forward(conv1_.forward(x, tape), training, tape), tape);
  h = pool2d(h, PoolMode::kMax, 3, 2, 1, tape);
  for (auto& stage : layers_) {
    for (auto& block : stage) h = bottleneck_forward(block.spec, block.params, h, training, tape);
  }
  return h;
}

Tensor Resnet50Model::forward(const Tensor& x, bool training, Prng& rng, Tape* tape) {
  Tensor h = pool2d(features(x, training, tape), PoolMode::kGlobalAvg, 0, 0, 0, tape);
  h = dropout(flatten(h), dropout_p_, training, rng, tape);
  return linear(h, fc_weight_, fc_bias_, tape);
}

std::vector<NamedTensor> Resnet50Model::state() const {
  std::vector<NamedTensor> out;
  out.push_back({"conv1.weight", conv1_.weight});
  append_bn(out, "bn1", bn1_);
  for (std::size_t s = 0; s < layers_.size(); ++s) {
    for (std::size_t b = 0; b < layers_[s].size(); ++b) {
      auto block = layers_[s][b].params.state("layer" + std::to_string(s + 1) + "." + std::to_string(b));
      out.insert(out.end(), block.begin(), block.end());
    }
  }
  out.push_back({"fc.weight", fc_weight_});
  out.push_back({"fc.bias", fc_bias_});
  return out;
}

std::vector<NamedTensor> Resnet50Model::parameters() const {
  std::vector<NamedTensor> out;
  for (auto& nt : state()) {
    if (!is_buffer_name(nt.name)) out.push_back(std::move(nt));
  }
  return out;
}

std::vector<NamedTensor> Resnet50Model::buffers() const {
  std::vector<NamedTensor> out;
  for (auto& nt : state()) {
    if (is_buffer_name(nt.name)) out.push_back(std::move(nt));
  }
  return out;
}

std::vector<NamedTensor> Resnet50Model::child_parameters(std::string_view child) const {
  std::vector<NamedTensor> out;
  for (auto& nt : parameters()) {
    if (child_of(nt.name) == child) out.push_back(std::move(nt));
  }
  return out;
}

void Resnet50Model::freeze_children(int n) {
  if (n < 0 || n > static_cast<int>(kChildren.size())) {
    throw ParameterError("freeze_children: n must be in [0,10], got " + std::to_string(n));
  }
  for (auto& nt : parameters()) nt.tensor.set_requires_grad(true);
  for (int i = 0; i < n; ++i) {
    for (auto& nt : child_parameters(kChildren[static_cast<std::size_t>(i)])) nt.tensor.set_requires_grad(false);
  }
  fc_weight_.set_requires_grad(true);
  fc_bias_.set_requires_grad(true);
}

std::int64_t Resnet50Model::param_count(bool trainable_only) const {
  std::int64_t total = 0;
  for (const auto& nt : parameters()) {
    if (!trainable_only || nt.tensor.requires_grad()) total += nt.tensor.numel();
  }
  return total;
}

void Resnet50Model::replace_head(int num_classes, float dropout_p, std::uint64_t init_seed) {
  if (num_classes < 2) throw ParameterError("resnet50: num_classes must be >= 2");
  if (!(dropout_p >= 0.0f && dropout_p < 1.0f)) throw ParameterError("resnet50: dropout must be in [0,1)");
  Prng rng(init_seed);
  num_classes_ = num_classes;
  dropout_p_ = dropout_p;
  fc_weight_ = he_uniform({num_classes, kFeatureChannels}, kFeatureChannels, rng);
  fc_bias_ = Tensor::zeros({num_classes}, true);
}

int Resnet50Model::convolution_count() const {
  int count = 1;
  for (const auto& stage : layers_) {
    for (const auto& block : stage) count += block.params.downsample_conv ? 4 : 3;
  }
  return count;
}

Resnet50Model build_resnet50(int num_classes, float dropout_p, std::uint64_t init_seed) {
  return Resnet50Model(num_classes, dropout_p, init_seed);
}

std::vector<std::string> model_children(const Resnet50Model&) {
  return {Resnet50Model::kChildren.begin(), Resnet50Model::kChildren.end()};
}

}  // namespace maskface
