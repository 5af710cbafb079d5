#pragma once

#include <cstdint>
#include <vector>

#include "maskface/resnet50.hpp"
#include "maskface/tensor.hpp"

namespace maskface {

struct SgdConfig {
  float momentum = 0.9f;
  bool nesterov = true;
};

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Base for first-order optimizers over a fixed parameter list. A step
/// updates parameters that currently require a gradient and leaves the rest
/// (and every gradient) untouched. Zeroing gradients is the caller's job.
class Optimizer {
 public:
  explicit Optimizer(std::vector<NamedTensor> params);
  virtual ~Optimizer() = default;

  /// Throws ContractError if a trainable parameter has no gradient.
  virtual void step(float lr) = 0;
  void zero_grad();

  const std::vector<NamedTensor>& params() const noexcept { return params_; }

 protected:
  void require_grads() const;

  std::vector<NamedTensor> params_;
};

/// v <- momentum*v + g; p <- p - lr*(g + momentum*v) with Nesterov,
/// p <- p - lr*v without.
class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<NamedTensor> params, SgdConfig cfg);
  void step(float lr) override;

  const SgdConfig& config() const noexcept { return cfg_; }
  const std::vector<std::vector<float>>& velocity() const noexcept { return velocity_; }

 private:
  SgdConfig cfg_;
  std::vector<std::vector<float>> velocity_;
};

/// Bias-corrected Adam.
class Adam final : public Optimizer {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig cfg);
  void step(float lr) override;

  const AdamConfig& config() const noexcept { return cfg_; }
  std::int64_t step_count() const noexcept { return t_; }

 private:
  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
};

/// lr = base_lr * gamma^floor(epoch / step_size).
struct StepLrSchedule {
  double base_lr = 0.002;
  double gamma = 0.11;
  int step_size = 14;

  void validate() const;
};

float lr_at_epoch(const StepLrSchedule& sched, int epoch);

}  // namespace maskface
