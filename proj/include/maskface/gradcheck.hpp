#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "maskface/tape.hpp"
#include "maskface/tensor.hpp"

namespace maskface {

/// A deterministic function of `inputs` returning a scalar. It must record
/// onto `tape` when one is given and run untraced when it is null.
using ScalarFunction = std::function<Tensor(std::span<Tensor> inputs, Tape* tape)>;

/// Compares the trace gradient of `f` against central differences
/// (f(x+eps) - f(x-eps)) / (2 eps) for every element of every input.
/// Per input tensor the error is max_j |a_j - n_j| divided by the largest
/// |a_j| or |n_j| (at least 1e-6); the maximum over inputs is returned.
/// Each element is also tried at eps/4 and eps/16 and the closest estimate
/// kept, so a step across a relu or max kink does not count as a mismatch.
/// Inputs are restored on return and left holding the analytic gradient.
float grad_check(const ScalarFunction& f, std::span<Tensor> inputs, float eps = 1e-3f);

struct GradCheckCase {
  std::string name;
  float max_rel_error;
};

/// The engine's standing gradient suite: every layer operation, a bottleneck
/// block and a two-block network on small random inputs.
std::vector<GradCheckCase> run_grad_check_suite(std::uint64_t seed = 7);

}  // namespace maskface
