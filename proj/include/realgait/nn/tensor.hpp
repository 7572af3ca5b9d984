#pragma once

#include <algorithm>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace realgait::nn {

// Dense row-major tensor, up to 4 dimensions. Shapes are plain ints; data is
// contiguous. This is deliberately minimal: layers do their own indexing.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(numel_of(shape_), T(0));
  }

  Tensor(std::initializer_list<int> shape)
      : Tensor(std::vector<int>(shape)) {}

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  int ndim() const { return static_cast<int>(shape_.size()); }

  std::size_t numel() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // 4-D accessors (n, c, h, w); 3-D and 2-D variants index from the left.
  T& at(int n, int c, int h, int w) {
    return data_[idx4(n, c, h, w)];
  }
  const T& at(int n, int c, int h, int w) const {
    return data_[idx4(n, c, h, w)];
  }
  T& at(int a, int b) { return data_[static_cast<std::size_t>(a) * shape_[1] + b]; }
  const T& at(int a, int b) const {
    return data_[static_cast<std::size_t>(a) * shape_[1] + b];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }
  void zero() { fill(T(0)); }

  void reshape(std::vector<int> new_shape) {
    if (numel_of(new_shape) != data_.size())
      throw std::invalid_argument("Tensor::reshape: size mismatch");
    shape_ = std::move(new_shape);
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  std::string shape_str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ", ";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t numel_of(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t idx4(int n, int c, int h, int w) const {
    return ((static_cast<std::size_t>(n) * shape_[1] + c) * shape_[2] + h) *
               shape_[3] +
           w;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

}  // namespace realgait::nn
