// Copyright 2026 The R-Mix Authors
// SPDX-License-Identifier: Apache-2.0

#include "rmix/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

#include "rmix/errors.hpp"

namespace rmix {

namespace {

void check_extents(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) throw ShapeError("tensor extents must be positive, got " + shape_string(shape));
  }
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor() : shape_{}, data_(1, 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(values.begin(), values.end()) {
  check_extents(shape_);
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("buffer of " + std::to_string(data_.size()) + " values does not match shape " +
                     shape_string(shape_));
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis " + std::to_string(axis) + " out of range for " + shape_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  Tensor out;
  out.shape_ = std::move(shape);
  out.data_ = data_;
  return out;
}

Tensor Tensor::slice0(std::size_t index) const {
  if (shape_.empty() || index >= shape_[0]) throw ShapeError("slice0 index out of range for " + shape_string(shape_));
  Shape inner(shape_.begin() + 1, shape_.end());
  const std::size_t n = shape_size(inner);
  std::vector<double> values(data_.begin() + static_cast<std::ptrdiff_t>(index * n),
                             data_.begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  return Tensor(std::move(inner), std::move(values));
}

void Tensor::set_slice0(std::size_t index, const Tensor& value) {
  if (shape_.empty() || index >= shape_[0]) throw ShapeError("set_slice0 index out of range for " + shape_string(shape_));
  Shape inner(shape_.begin() + 1, shape_.end());
  if (value.shape() != inner) {
    throw ShapeError("set_slice0 expects " + shape_string(inner) + ", got " + shape_string(value.shape()));
  }
  std::copy(value.data_.begin(), value.data_.end(), data_.begin() + static_cast<std::ptrdiff_t>(index * value.size()));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = items[0].shape();
  shape.insert(shape.begin(), items.size());
  std::vector<double> values;
  values.reserve(shape_size(shape));
  for (const Tensor& item : items) {
    if (item.shape() != items[0].shape()) throw ShapeError("stack of mismatched shapes");
    values.insert(values.end(), item.data().begin(), item.data().end());
  }
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace rmix
