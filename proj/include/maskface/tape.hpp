#pragma once

#include <functional>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "maskface/tensor.hpp"

namespace maskface {

enum class OpKind {
  kConv2d,
  kBatchNorm2d,
  kMaxPool2d,
  kGlobalAvgPool,
  kLinear,
  kRelu,
  kDropout,
  kSoftmaxCrossEntropy,
  kAdd,
  kMul,
  kSum,
  kCustom,
};

std::string_view op_name(OpKind kind);

/// One executed operation. `backward` reads output.grad() and accumulates
/// into the gradients of those inputs that require them; forward values it
/// needs are captured by the closure.
struct OpRecord {
  OpKind kind;
  std::vector<Tensor> inputs;
  Tensor output;
  std::function<void()> backward;
};

/// Operation trace for reverse-mode differentiation. Operations append to it
/// when given a tape and at least one input requires a gradient.
class Tape {
 public:
  /// Appends a record and marks `output` as produced. Throws ContractError if
  /// an input was produced by an operation that is not on this tape.
  void record(OpKind kind, std::vector<Tensor> inputs, Tensor output, std::function<void()> backward);

  bool empty() const noexcept { return records_.empty(); }
  std::size_t size() const noexcept { return records_.size(); }
  const std::vector<OpRecord>& records() const noexcept { return records_; }
  bool produced(const Tensor& t) const { return produced_.contains(t.id()); }

  void clear();

 private:
  std::vector<OpRecord> records_;
  std::unordered_set<const void*> produced_;
};

/// True when an operation with these inputs should be recorded.
bool should_record(const Tape* tape, std::initializer_list<const Tensor*> inputs);

/// Back-propagates from a scalar loss through `tape`, leaving dLoss/dLeaf in
/// every leaf that requires a gradient. Gradients add onto whatever the
/// leaves already hold. The tape is cleared afterwards.
void backward(const Tensor& loss, Tape& tape);

}  // namespace maskface
