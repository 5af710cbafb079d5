#pragma once

#include <cstdint>
#include <span>

#include "maskface/prng.hpp"
#include "maskface/tape.hpp"
#include "maskface/tensor.hpp"

namespace maskface {

/// Output extent of a sliding window: floor((size + 2*padding - kernel) / stride) + 1.
std::int64_t window_output_size(std::int64_t size, std::int64_t kernel, std::int64_t stride, std::int64_t padding);

struct Conv2dOptions {
  int stride = 1;
  int padding = 0;
};

/// Cross-correlation of NCHW `x` with `w` [out, in, kh, kw]; `bias` may be
/// undefined. Padding contributes zeros.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, Conv2dOptions opts, Tape* tape = nullptr);

struct BatchNormOptions {
  float eps = 1e-5f;
  float momentum = 0.1f;
  bool training = false;
};

/// Per-channel batch normalization of NCHW `x`. In training mode the batch
/// statistics (biased variance) normalize the input and the running buffers
/// are blended with momentum (the running variance receives the unbiased
/// estimate). In eval mode the running buffers are read only.
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, Tensor& running_mean,
                   Tensor& running_var, BatchNormOptions opts, Tape* tape = nullptr);

enum class PoolMode { kMax, kGlobalAvg };

/// Max pooling (padding never wins) or global average pooling to (N,C,1,1);
/// the window arguments are ignored for kGlobalAvg.
Tensor pool2d(const Tensor& x, PoolMode mode, int kernel, int stride, int padding, Tape* tape = nullptr);

/// y = x * w^T + b for x [N, in], w [out, in], b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b, Tape* tape = nullptr);

Tensor relu(const Tensor& x, Tape* tape = nullptr);

/// Inverted dropout: in training mode each element is zeroed with
/// probability p (one PRNG draw per element) and survivors are scaled by
/// 1/(1-p). Identity in eval mode; no draws are consumed then.
Tensor dropout(const Tensor& x, float p, bool training, Prng& rng, Tape* tape = nullptr);

/// Mean over the batch of -log softmax(logits)[target].
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> targets, Tape* tape = nullptr);

/// Row-wise softmax of [N, C] logits, no gradient.
Tensor softmax(const Tensor& logits);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape = nullptr);
/// Sum of all elements as a scalar.
Tensor sum(const Tensor& x, Tape* tape = nullptr);

/// (N, ...) -> (N, rest) view.
Tensor flatten(const Tensor& x);

}  // namespace maskface
