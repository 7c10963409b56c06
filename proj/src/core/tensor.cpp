#include "medmat/core/tensor.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "medmat/core/error.hpp"

namespace medmat {

std::string Shape::str() const {
  return fmt::format("({}, {}, {})", channels, height, width);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape), data_(shape.size(), fill) {
  if (shape.channels < 0 || shape.height < 0 || shape.width < 0) {
    throw ShapeError("negative tensor extent " + shape.str());
  }
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), data_(values.begin(), values.end()) {
  if (data_.size() != shape_.size()) {
    throw ShapeError(fmt::format("tensor of shape {} given {} values", shape_.str(), data_.size()));
  }
}

std::span<double> Tensor::channel(int c) {
  return std::span<double>(data_).subspan(static_cast<std::size_t>(c) * shape_.plane(), shape_.plane());
}

std::span<const double> Tensor::channel(int c) const {
  return std::span<const double>(data_).subspan(static_cast<std::size_t>(c) * shape_.plane(),
                                                shape_.plane());
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require_same_shape(shape_, other.shape_, "tensor accumulate");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (a != b) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", what, a.str(), b.str()));
  }
}

}  // namespace medmat
