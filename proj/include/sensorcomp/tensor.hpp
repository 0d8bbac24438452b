#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace sc {

using Shape = std::vector<std::size_t>;

/// Single 64-bit generator used by every stochastic routine.
using Rng = std::mt19937_64;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::size_t shape_size(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major n-dimensional array. Every dimension is positive; a
/// default-constructed tensor is the empty state (no shape, no data).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (shape_size(shape_) != data_.size())
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + shape_str(shape_));
  }

  static BasicTensor zeros(Shape shape) { return BasicTensor(std::move(shape)); }
  static BasicTensor full(Shape shape, T v) { return BasicTensor(std::move(shape), v); }
  static BasicTensor scalar(T v) { return BasicTensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  const std::vector<T>& values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(std::initializer_list<std::size_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::size_t> index) const { return data_[offset(index)]; }

  /// Same data under a new shape of equal element count.
  BasicTensor reshaped(Shape shape) const& {
    if (shape_size(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return BasicTensor(std::move(shape), data_);
  }
  BasicTensor reshaped(Shape shape) && {
    if (shape_size(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return BasicTensor(std::move(shape), std::move(data_));
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  /// Rows [begin, end) along axis 0.
  BasicTensor slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || begin >= end || end > shape_[0])
      throw DimensionError("invalid row slice");
    const std::size_t stride = data_.size() / shape_[0];
    Shape s = shape_;
    s[0] = end - begin;
    return BasicTensor(std::move(s), std::vector<T>(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  /// Gather rows along axis 0 in the given order.
  BasicTensor gather_rows(std::span<const std::size_t> rows) const {
    if (rows.empty()) throw DimensionError("gather of zero rows");
    const std::size_t stride = data_.size() / shape_[0];
    Shape s = shape_;
    s[0] = rows.size();
    std::vector<T> out;
    out.reserve(rows.size() * stride);
    for (std::size_t r : rows) {
      if (r >= shape_[0]) throw DimensionError("gather row out of range");
      out.insert(out.end(), data_.begin() + r * stride, data_.begin() + (r + 1) * stride);
    }
    return BasicTensor(std::move(s), std::move(out));
  }

  bool all_finite() const;

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

 private:
  static void check_shape(const Shape& shape) {
    if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
    for (std::size_t d : shape)
      if (d == 0) throw DimensionError("tensor dimensions must be positive: " + shape_str(shape));
  }

  std::size_t offset(std::initializer_list<std::size_t> index) const {
    if (index.size() != shape_.size()) throw DimensionError("index rank mismatch");
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
      if (i >= shape_[axis]) throw DimensionError("index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Concatenate along axis 0; trailing shapes must agree.
template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts);

/// Uniform in [-limit, limit] with limit = sqrt(6 / (fan_in + fan_out)).
template <typename T>
BasicTensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng);

template <typename T>
BasicTensor<T> uniform(Shape shape, T low, T high, Rng& rng);

template <typename T>
BasicTensor<T> normal(Shape shape, T mean, T stddev, Rng& rng);

}  // namespace sc
