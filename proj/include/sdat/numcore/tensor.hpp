#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sdat {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct TensorStorage {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
};
}  // namespace detail

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Tensor is a handle: copies share storage, so a parameter registered in a
/// model and the same parameter captured by a tape node are one object.
/// Use clone() for an independent copy. A default-constructed Tensor is
/// "undefined" and only valid as a placeholder.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                       bool requires_grad = false);

  bool defined() const { return storage_ != nullptr; }

  const Shape& shape() const;
  std::size_t ndim() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;
  /// First dimension of a 2-D tensor.
  std::size_t rows() const;
  /// Last dimension of a 2-D tensor.
  std::size_t cols() const;

  std::span<const double> values() const;
  /// Raw write access. Only meant for leaves (optimizer updates, gradient
  /// checks); mutating a tensor already consumed by a tape invalidates it.
  std::span<double> mutable_values() const;
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);

  bool has_grad() const;
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::span<const double> grad() const;
  /// Gradient storage is shared by every handle, so this is const like
  /// shared_ptr::operator*.
  std::span<double> mutable_grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Same values, no gradient state, no tape history.
  Tensor detach() const;

  /// Identity of the underlying storage; equal for handles sharing storage.
  const void* id() const { return storage_.get(); }

 private:
  std::shared_ptr<detail::TensorStorage> storage_;
};

}  // namespace sdat
