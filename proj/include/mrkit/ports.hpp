// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "mrkit/tensor.hpp"

namespace mrkit::core {

// Named placeholder for a tensor. Dims are symbolic names (batch, q_len,
// support_len, ...) checked by name, never by value; concrete sizes are a
// runtime concern.
struct TensorPort {
  std::string name;
  std::vector<std::string> dims;
  engine::DType dtype = engine::DType::kF64;
  std::string doc;

  bool operator==(const TensorPort&) const = default;
};

// Two ports are compatible iff their dim names and dtype match.
inline bool ports_compatible(const TensorPort& a, const TensorPort& b) {
  return a.dims == b.dims && a.dtype == b.dtype;
}

// The shared port vocabulary of the text pipelines. Input modules emit the
// id/mask/length triple per sequence; models add task heads.
namespace ports {

TensorPort question();
TensorPort question_mask();
TensorPort question_length();
TensorPort support();
TensorPort support_mask();
TensorPort support_length();
TensorPort char_question();
TensorPort char_support();

// training targets
TensorPort answer_idx();     // candidate index per instance
TensorPort answer_start();   // gold start token per instance
TensorPort answer_end();     // gold end token per instance

// model outputs
TensorPort logits();         // [batch, num_classes]
TensorPort start_scores();   // [batch, support_len]
TensorPort end_scores();     // [batch, support_len]
TensorPort loss();           // scalar

}  // namespace ports

}  // namespace mrkit::core
