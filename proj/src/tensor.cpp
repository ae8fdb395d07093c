// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/tensor.hpp"

#include <sstream>

namespace mrkit::engine {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (std::int64_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, DType dtype) {
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = dtype;
  const auto n = static_cast<std::size_t>(shape_numel(t.shape_));
  if (dtype == DType::kF64) {
    t.f_.assign(n, 0.0);
  } else {
    t.i_.assign(n, 0);
  }
  return t;
}

Tensor Tensor::full(Shape shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& x : t.f_) x = value;
  return t;
}

Tensor Tensor::scalar(double value) { return full({}, value); }

Tensor Tensor::from_f64(Shape shape, std::vector<double> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw Error(ErrorKind::kShapeMismatch,
                "from_f64: shape " + shape_str(shape) + " needs " +
                    std::to_string(shape_numel(shape)) + " values, got " +
                    std::to_string(data.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::kF64;
  t.f_ = std::move(data);
  return t;
}

Tensor Tensor::from_i64(Shape shape, std::vector<std::int64_t> data) {
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size())) {
    throw Error(ErrorKind::kShapeMismatch,
                "from_i64: shape " + shape_str(shape) + " needs " +
                    std::to_string(shape_numel(shape)) + " values, got " +
                    std::to_string(data.size()));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = DType::kI64;
  t.i_ = std::move(data);
  return t;
}

double Tensor::scalar_value() const {
  if (numel() != 1) {
    throw Error(ErrorKind::kNotScalar,
                "expected a scalar, got shape " + shape_str(shape_));
  }
  return dtype_ == DType::kF64 ? f_[0] : static_cast<double>(i_[0]);
}

}  // namespace mrkit::engine
