#include "maskface/optim.hpp"

#include <cmath>
#include <utility>

#include "maskface/errors.hpp"

namespace maskface {

Optimizer::Optimizer(std::vector<NamedTensor> params) : params_(std::move(params)) {}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

void Optimizer::require_grads() const {
  for (const auto& p : params_) {
    if (p.tensor.requires_grad() && !p.tensor.has_grad()) {
      throw ContractError("optimizer step: trainable parameter '" + p.name + "' has no gradient");
    }
  }
}

Sgd::Sgd(std::vector<NamedTensor> params, SgdConfig cfg) : Optimizer(std::move(params)), cfg_(cfg) {
  if (!(cfg.momentum >= 0.0f && cfg.momentum < 1.0f)) throw ParameterError("sgd: momentum must be in [0,1)");
  velocity_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) velocity_[i].assign(params_[i].tensor.data().size(), 0.0f);
}

void Sgd::step(float lr) {
  require_grads();
  const float mu = cfg_.momentum;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.requires_grad()) continue;
    auto w = p.data();
    auto g = std::as_const(p).grad();
    auto& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      v[j] = mu * v[j] + g[j];
      const float update = cfg_.nesterov ? g[j] + mu * v[j] : v[j];
      w[j] -= lr * update;
    }
  }
}

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg) : Optimizer(std::move(params)), cfg_(cfg) {
  if (!(cfg.beta1 >= 0.0f && cfg.beta1 < 1.0f && cfg.beta2 >= 0.0f && cfg.beta2 < 1.0f)) {
    throw ParameterError("adam: betas must be in [0,1)");
  }
  if (!(cfg.eps > 0.0f)) throw ParameterError("adam: eps must be > 0");
  m_.resize(params_.size());
  v_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i].assign(params_[i].tensor.data().size(), 0.0f);
    v_[i].assign(params_[i].tensor.data().size(), 0.0f);
  }
}

void Adam::step(float lr) {
  require_grads();
  ++t_;
  const float b1 = cfg_.beta1, b2 = cfg_.beta2;
  const float correction1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(b1), static_cast<double>(t_)));
  const float correction2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(b2), static_cast<double>(t_)));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i].tensor;
    if (!p.requires_grad()) continue;
    auto w = p.data();
    auto g = std::as_const(p).grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      const float m_hat = m[j] / correction1;
      const float v_hat = v[j] / correction2;
      w[j] -= lr * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
  }
}

void StepLrSchedule::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("lr schedule: gamma must be in (0,1]");
  if (step_size < 1) throw ParameterError("lr schedule: step_size must be >= 1");
}

float lr_at_epoch(const StepLrSchedule& sched, int epoch) {
  if (epoch < 0) throw ParameterError("lr_at_epoch: epoch must be >= 0");
  const int decays = epoch / sched.step_size;
  return static_cast<float>(sched.base_lr * std::pow(sched.gamma, decays));
}

}  // namespace maskface
