#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace maskface {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major f32 array with an optional gradient slot.
///
/// A Tensor is a handle: copies share storage, which is how parameters are
/// referenced by the model, the optimizer and the op trace at the same time.
/// Use clone() for an independent copy. Rank-0 tensors are scalars.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const noexcept { return impl_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::int64_t dim(std::size_t axis) const;
  std::int64_t numel() const;

  std::span<float> data();
  std::span<const float> data() const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);

  bool has_grad() const;
  std::span<float> grad();
  std::span<const float> grad() const;
  /// Allocates a zero gradient if absent and returns it.
  std::span<float> ensure_grad() const;
  /// Drops the gradient buffer.
  void zero_grad();

  /// True for tensors written by an operation rather than created directly.
  bool is_produced() const;
  void mark_produced();

  Tensor clone() const;
  /// View with a new shape over the same storage (data and gradient). Views
  /// need no trace record: gradients written through the view land in the
  /// original buffer.
  Tensor reshaped(Shape shape) const;

  bool same_storage(const Tensor& other) const noexcept;
  /// Identity of the underlying storage.
  const void* id() const noexcept;

 private:
  struct Storage {
    std::vector<float> data;
    std::vector<float> grad;
    bool requires_grad = false;
    bool produced = false;
  };
  struct Impl {
    Shape shape;
    std::shared_ptr<Storage> storage;
  };

  std::shared_ptr<Impl> impl_;

  Impl& impl();
  const Impl& impl() const;
};

/// Process-wide switch for checking that forward outputs are finite.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace maskface
