#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace convprobe {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major array. Extents are strictly positive; a rank-0 shape holds
// one element.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;

  explicit BasicTensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_.assign(static_cast<std::size_t>(shape_numel(shape_)), fill);
  }

  BasicTensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    require(static_cast<std::int64_t>(data_.size()) == shape_numel(shape_), ErrorCode::kShapeMismatch,
            "tensor data has " + std::to_string(data_.size()) + " elements but shape " +
                shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)));
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  std::int64_t size() const noexcept { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* raw() noexcept { return data_.data(); }
  const T* raw() const noexcept { return data_.data(); }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  std::vector<std::int64_t> strides() const {
    std::vector<std::int64_t> s(shape_.size(), 1);
    for (int i = rank() - 2; i >= 0; --i) s[i] = s[i + 1] * shape_[i + 1];
    return s;
  }

  std::int64_t offset(std::initializer_list<std::int64_t> index) const {
    require(static_cast<int>(index.size()) == rank(), ErrorCode::kInvalidArgument,
            "index rank does not match tensor rank " + std::to_string(rank()));
    std::int64_t off = 0;
    int axis = 0;
    for (std::int64_t i : index) {
      require(i >= 0 && i < shape_[axis], ErrorCode::kInvalidArgument, "index out of range");
      off = off * shape_[axis] + i;
      ++axis;
    }
    return off;
  }

  T& at(std::initializer_list<std::int64_t> index) { return data_[offset(index)]; }
  const T& at(std::initializer_list<std::int64_t> index) const { return data_[offset(index)]; }

  BasicTensor reshaped(Shape shape) const {
    require(shape_numel(shape) == size(), ErrorCode::kShapeMismatch,
            "cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    return BasicTensor(std::move(shape), data_);
  }

  template <typename U>
  BasicTensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return BasicTensor<U>(shape_, std::move(out));
  }

  bool all_finite() const {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool operator==(const BasicTensor& other) const = default;

 private:
  static void check_shape(const Shape& shape) {
    for (std::int64_t e : shape)
      require(e > 0, ErrorCode::kShapeMismatch, "non-positive extent in shape " + shape_str(shape));
  }

  Shape shape_;
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
// Double precision exists for finite-difference checking only.
using Tensor64 = BasicTensor<double>;

// Byte-level equality, distinguishing -0.0 from 0.0 and comparing NaN payloads.
bool bit_identical(const Tensor& a, const Tensor& b);

}  // namespace convprobe
