#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lateralgrad {

/// Dense row-major tensor of doubles. One dtype everywhere; shape is a list
/// of non-negative extents and data length always equals their product.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shape);  // zero-filled
  Tensor(std::vector<int64_t> shape, double fill);
  Tensor(std::vector<int64_t> shape, std::vector<double> data);

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  const std::vector<int64_t>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int64_t dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](int64_t flat) { return data_[static_cast<size_t>(flat)]; }
  double operator[](int64_t flat) const { return data_[static_cast<size_t>(flat)]; }

  double& operator()(int64_t i) { return data_[static_cast<size_t>(i)]; }
  double operator()(int64_t i) const { return data_[static_cast<size_t>(i)]; }
  double& operator()(int64_t i, int64_t j) {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double operator()(int64_t i, int64_t j) const {
    return data_[static_cast<size_t>(i * shape_[1] + j)];
  }
  double& operator()(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double operator()(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double& operator()(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }
  double operator()(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  std::string shape_str() const;

  void fill(double v);
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  /// Reinterprets the same data under a new shape (numel must match).
  Tensor reshaped(std::vector<int64_t> new_shape) const;

 private:
  std::vector<int64_t> shape_;
  std::vector<double> data_;
};

bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Copies slice [b] along the leading dimension, keeping that dimension with
/// extent 1 (an N x C x H x W batch yields 1 x C x H x W).
Tensor slice_leading(const Tensor& t, int64_t b);

}  // namespace lateralgrad
