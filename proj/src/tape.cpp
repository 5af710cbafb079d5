#include "maskface/tape.hpp"

#include <algorithm>

#include "maskface/errors.hpp"

namespace maskface {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kBatchNorm2d: return "batchnorm2d";
    case OpKind::kMaxPool2d: return "max_pool2d";
    case OpKind::kGlobalAvgPool: return "global_avg_pool";
    case OpKind::kLinear: return "linear";
    case OpKind::kRelu: return "relu";
    case OpKind::kDropout: return "dropout";
    case OpKind::kSoftmaxCrossEntropy: return "softmax_cross_entropy";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kSum: return "sum";
    case OpKind::kCustom: return "custom";
  }
  return "unknown";
}

void Tape::record(OpKind kind, std::vector<Tensor> inputs, Tensor output, std::function<void()> backward) {
  for (const auto& in : inputs) {
    if (in.defined() && in.is_produced() && !produced_.contains(in.id())) {
      throw ContractError(std::string(op_name(kind)) + ": input produced outside this trace");
    }
  }
  output.mark_produced();
  output.set_requires_grad(true);
  produced_.insert(output.id());
  records_.push_back({kind, std::move(inputs), std::move(output), std::move(backward)});
}

void Tape::clear() {
  records_.clear();
  produced_.clear();
}

bool should_record(const Tape* tape, std::initializer_list<const Tensor*> inputs) {
  if (tape == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t != nullptr && t->defined() && t->requires_grad(); });
}

void backward(const Tensor& loss, Tape& tape) {
  if (tape.empty()) throw ContractError("backward on an empty trace");
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got " + shape_to_string(loss.shape()));
  if (!tape.produced(loss)) throw ContractError("loss was not produced through this trace");

  Tensor seed = loss;
  seed.ensure_grad()[0] += 1.0f;

  const auto& records = tape.records();
  for (auto it = records.rbegin(); it != records.rend(); ++it) {
    if (!it->output.has_grad()) continue;
    it->backward();
  }
  tape.clear();
}

}  // namespace maskface
