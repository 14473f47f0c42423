#include "vsseg/nn/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

namespace vsseg::nn {

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 0) throw std::invalid_argument("negative tensor dimension");
    n *= d;
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), values_(static_cast<size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (shape_numel(shape_) != static_cast<int64_t>(values_.size())) {
    throw std::invalid_argument("tensor value count does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != numel()) {
    throw std::invalid_argument("cannot reshape " + shape_string(shape_) + " to " +
                                shape_string(shape));
  }
  return Tensor(std::move(shape), values_);
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw std::invalid_argument("tensor add shape mismatch " + shape_string(shape_) + " vs " +
                                shape_string(other.shape_));
  }
  for (size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

}  // namespace vsseg::nn
