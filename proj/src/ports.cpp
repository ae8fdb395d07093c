// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/ports.hpp"

namespace mrkit::core::ports {

using engine::DType;

TensorPort question() {
  return {"question", {"batch", "q_len"}, DType::kI64,
          "token ids of the question, padded to the batch max"};
}
TensorPort question_mask() {
  return {"question_mask", {"batch", "q_len"}, DType::kF64,
          "1 for real tokens, 0 for padding"};
}
TensorPort question_length() {
  return {"question_length", {"batch"}, DType::kI64, "tokens per question"};
}
TensorPort support() {
  return {"support", {"batch", "support_len"}, DType::kI64,
          "token ids of the first support document"};
}
TensorPort support_mask() {
  return {"support_mask", {"batch", "support_len"}, DType::kF64,
          "1 for real tokens, 0 for padding"};
}
TensorPort support_length() {
  return {"support_length", {"batch"}, DType::kI64, "tokens per support"};
}
TensorPort char_question() {
  return {"char_question", {"batch", "q_len", "char_len"}, DType::kI64,
          "byte ids per question token"};
}
TensorPort char_support() {
  return {"char_support", {"batch", "support_len", "char_len"}, DType::kI64,
          "byte ids per support token"};
}

TensorPort answer_idx() {
  return {"answer_idx", {"batch"}, DType::kI64, "gold candidate index"};
}
TensorPort answer_start() {
  return {"answer_start", {"batch"}, DType::kI64, "gold start token index"};
}
TensorPort answer_end() {
  return {"answer_end", {"batch"}, DType::kI64,
          "gold end token index (inclusive)"};
}

TensorPort logits() {
  return {"logits", {"batch", "num_classes"}, DType::kF64,
          "unnormalised class scores"};
}
TensorPort start_scores() {
  return {"start_scores", {"batch", "support_len"}, DType::kF64,
          "span start scores per support position"};
}
TensorPort end_scores() {
  return {"end_scores", {"batch", "support_len"}, DType::kF64,
          "span end scores per support position"};
}
TensorPort loss() { return {"loss", {}, DType::kF64, "scalar training loss"}; }

}  // namespace mrkit::core::ports
