#include "maskface/tensor.hpp"

#include <atomic>
#include <sstream>
#include <utility>

#include "maskface/errors.hpp"

namespace maskface {

namespace {
std::atomic<bool> g_finite_checks{false};
}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks.store(enabled, std::memory_order_relaxed); }
bool finite_checks_enabled() { return g_finite_checks.load(std::memory_order_relaxed); }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ')';
  return out.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  auto n = shape_numel(shape);
  return from_data(std::move(shape), std::vector<float>(static_cast<std::size_t>(n), value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  for (auto d : shape) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_to_string(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_to_string(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->storage = std::make_shared<Storage>();
  t.impl_->storage->data = std::move(data);
  t.impl_->storage->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(float value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

Tensor::Impl& Tensor::impl() {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Tensor::Impl& Tensor::impl() const {
  if (!impl_) throw ContractError("use of an undefined tensor");
  return *impl_;
}

const Shape& Tensor::shape() const { return impl().shape; }

std::int64_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " + shape_to_string(s));
  }
  return s[axis];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl().storage->data.size()); }

std::span<float> Tensor::data() { return impl().storage->data; }
std::span<const float> Tensor::data() const { return impl().storage->data; }

float Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  return data()[0];
}

bool Tensor::requires_grad() const { return impl().storage->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl().storage->requires_grad = value; }

bool Tensor::has_grad() const { return !impl().storage->grad.empty(); }
std::span<float> Tensor::grad() { return impl().storage->grad; }
std::span<const float> Tensor::grad() const { return impl().storage->grad; }

std::span<float> Tensor::ensure_grad() const {
  auto& s = *impl().storage;
  if (s.grad.empty()) s.grad.assign(s.data.size(), 0.0f);
  return s.grad;
}

void Tensor::zero_grad() {
  auto& s = *impl().storage;
  s.grad.clear();
  s.grad.shrink_to_fit();
}

bool Tensor::is_produced() const { return impl().storage->produced; }
void Tensor::mark_produced() { impl().storage->produced = true; }

Tensor Tensor::clone() const {
  const auto& i = impl();
  return from_data(i.shape, i.storage->data, i.storage->requires_grad);
}

Tensor Tensor::reshaped(Shape shape) const {
  const auto& i = impl();
  if (shape_numel(shape) != numel()) {
    throw DimensionError("cannot view " + shape_to_string(i.shape) + " as " + shape_to_string(shape));
  }
  Tensor t;
  t.impl_ = std::make_shared<Impl>();
  t.impl_->shape = std::move(shape);
  t.impl_->storage = i.storage;
  return t;
}

bool Tensor::same_storage(const Tensor& other) const noexcept {
  if (!impl_ || !other.impl_) return impl_ == other.impl_;
  return impl_->storage == other.impl_->storage;
}

const void* Tensor::id() const noexcept { return impl_ ? impl_->storage.get() : nullptr; }

}  // namespace maskface
