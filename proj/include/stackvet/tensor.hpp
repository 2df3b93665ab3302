#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stackvet/common.hpp"

namespace stackvet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& dims);

/// Dense row-major array. Images are (C, H, W); batches are (N, C, H, W).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape dims, T fill = T(0)) : dims_(std::move(dims)), data_(shape_size(dims_), fill) {}

  Tensor(Shape dims, std::vector<T> values) : dims_(std::move(dims)), data_(std::move(values)) {
    if (data_.size() != shape_size(dims_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match dims " +
                       shape_string(dims_));
    }
  }

  static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

  const Shape& dims() const noexcept { return dims_; }
  std::size_t rank() const noexcept { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Element of a rank-2 (H, W) tensor.
  T& at(std::size_t h, std::size_t w) { return data_[h * dims_[1] + w]; }
  const T& at(std::size_t h, std::size_t w) const { return data_[h * dims_[1] + w]; }

  /// Element of a rank-3 (C, H, W) tensor.
  T& at(std::size_t c, std::size_t h, std::size_t w) { return data_[(c * dims_[1] + h) * dims_[2] + w]; }
  const T& at(std::size_t c, std::size_t h, std::size_t w) const {
    return data_[(c * dims_[1] + h) * dims_[2] + w];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  /// Same data under new dims; element count must agree.
  Tensor reshaped(Shape dims) const& {
    Tensor out = *this;
    out.reshape(std::move(dims));
    return out;
  }
  Tensor reshaped(Shape dims) && {
    reshape(std::move(dims));
    return std::move(*this);
  }
  void reshape(Shape dims) {
    if (shape_size(dims) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(dims_) + " to " + shape_string(dims));
    }
    dims_ = std::move(dims);
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(dims_, std::move(out));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape dims_;
  std::vector<T> data_;
};

/// Batch view of a rank-3 (C,H,W) or rank-4 (N,C,H,W) image tensor.
struct ImageDims {
  std::size_t n = 1, c = 0, h = 0, w = 0;
  std::size_t plane() const noexcept { return h * w; }
  std::size_t sample() const noexcept { return c * h * w; }
};

/// Interprets dims as images; throws ShapeError naming `what` otherwise.
ImageDims image_dims(const Shape& dims, const char* what);

/// Shape with the same rank as `like` (3 or 4) holding the given image dims.
Shape image_shape_like(const Shape& like, std::size_t n, std::size_t c, std::size_t h, std::size_t w);

/// A trainable tensor with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string param_name, Tensor<T> initial)
      : name(std::move(param_name)), value(std::move(initial)), grad(value.dims()) {}

  void zero_grad() { grad = Tensor<T>(value.dims()); }
  std::size_t size() const noexcept { return value.size(); }
};

}  // namespace stackvet
