// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrkit/error.hpp"

namespace mrkit::engine {

enum class DType : std::uint8_t { kF64 = 0, kI64 = 1 };

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor, f64 or i64. Rank-0 (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() : shape_{0} {}

  static Tensor zeros(Shape shape, DType dtype = DType::kF64);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor from_f64(Shape shape, std::vector<double> data);
  static Tensor from_i64(Shape shape, std::vector<std::int64_t> data);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t numel() const { return shape_numel(shape_); }
  DType dtype() const { return dtype_; }

  std::span<double> f64() { return f_; }
  std::span<const double> f64() const { return f_; }
  std::span<std::int64_t> i64() { return i_; }
  std::span<const std::int64_t> i64() const { return i_; }

  double scalar_value() const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

 private:
  Shape shape_;
  DType dtype_ = DType::kF64;
  std::vector<double> f_;
  std::vector<std::int64_t> i_;
};

}  // namespace mrkit::engine
