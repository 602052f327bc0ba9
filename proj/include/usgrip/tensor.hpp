#pragma once

#include <concepts>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "usgrip/error.hpp"

namespace usgrip {

// Dense row-major tensor. Strides are derived from the shape, never stored.
// Float/double tensors are the compute types; u8/i8/u16 tensors are storage
// only (image pixels, quantized weights, binary16 bit patterns).
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), T{});
  }

  TensorT(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(static_cast<int64_t>(data_.size()) == checked_numel(shape_), Errc::shape_mismatch,
            "data length does not match product(shape)");
  }

  static TensorT full(std::vector<int> shape, T value) {
    TensorT t(std::move(shape));
    for (auto& v : t.data_) v = value;
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

  // Row-major offsets for the common ranks.
  int64_t offset2(int i, int j) const { return static_cast<int64_t>(i) * shape_[1] + j; }
  int64_t offset3(int i, int j, int k) const {
    return (static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k;
  }
  int64_t offset4(int i, int j, int k, int l) const {
    return ((static_cast<int64_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l;
  }

  T& at2(int i, int j) { return data_[static_cast<size_t>(offset2(i, j))]; }
  const T& at2(int i, int j) const { return data_[static_cast<size_t>(offset2(i, j))]; }
  T& at3(int i, int j, int k) { return data_[static_cast<size_t>(offset3(i, j, k))]; }
  const T& at3(int i, int j, int k) const { return data_[static_cast<size_t>(offset3(i, j, k))]; }
  T& at4(int i, int j, int k, int l) { return data_[static_cast<size_t>(offset4(i, j, k, l))]; }
  const T& at4(int i, int j, int k, int l) const {
    return data_[static_cast<size_t>(offset4(i, j, k, l))];
  }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  TensorT reshaped(std::vector<int> shape) const {
    require(checked_numel(shape) == size(), Errc::shape_mismatch, "reshape changes element count");
    return TensorT(std::move(shape), data_);
  }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape_[i]);
    }
    return s + "]";
  }

 private:
  static int64_t checked_numel(const std::vector<int>& shape) {
    int64_t n = 1;
    for (int d : shape) {
      require(d > 0, Errc::shape_mismatch, "dimension sizes must be positive");
      n *= d;
    }
    return n;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;

}  // namespace usgrip
