#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vsseg::nn {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array of doubles. Spatial tensors use (N, C, Z, Y, X) with X
// contiguous, so a 2D image is stored as (N, C, 1, H, W).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }

  const Shape& shape() const { return shape_; }
  int64_t dim(size_t axis) const { return shape_.at(axis); }
  size_t rank() const { return shape_.size(); }
  int64_t numel() const { return static_cast<int64_t>(values_.size()); }
  bool empty() const { return values_.empty(); }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }

  // Reinterprets the buffer with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double value);
  Tensor& operator+=(const Tensor& other);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace vsseg::nn
