// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "mrkit/tensor.hpp"

namespace mrkit::engine {

namespace detail {
struct VarNode {
  Tensor value;
  Tensor grad;  // allocated lazily, always f64, same shape as value
  bool requires_grad = false;
  bool grad_alloc = false;

  void ensure_grad() {
    if (!grad_alloc) {
      grad = Tensor::zeros(value.shape());
      grad_alloc = true;
    }
  }
};
}  // namespace detail

// Shared handle to a tensor participating in differentiation. Copying a Var
// aliases the underlying node, so parameters keep their gradient buffers
// across steps.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false)
      : node_(std::make_shared<detail::VarNode>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& value() { return node_->value; }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  const Tensor& grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  Tensor& grad() {
    node_->ensure_grad();
    return node_->grad;
  }

  void zero_grad() {
    if (node_ && node_->grad_alloc) {
      for (double& g : node_->grad.f64()) g = 0.0;
    }
  }

  void accumulate(const Tensor& g) {
    node_->ensure_grad();
    auto dst = node_->grad.f64();
    auto src = g.f64();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  detail::VarNode* raw() const { return node_.get(); }

 private:
  std::shared_ptr<detail::VarNode> node_;
};

// Records primitive applications in execution order; backward replays the
// registered rules in exact reverse order. Fan-out accumulates additively
// because every rule adds into its inputs' grad buffers.
class Tape {
 public:
  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const { return steps_.size(); }
  bool consumed() const { return consumed_; }

  void backward(const Var& loss) {
    if (consumed_) {
      throw Error(ErrorKind::kTapeConsumed,
                  "backward already ran on this tape");
    }
    if (!loss.defined() || loss.value().numel() != 1 ||
        loss.value().dtype() != DType::kF64) {
      throw Error(ErrorKind::kNotScalar,
                  "backward needs a scalar f64 loss, got " +
                      (loss.defined() ? shape_str(loss.value().shape())
                                      : std::string("undefined")));
    }
    consumed_ = true;
    loss.raw()->ensure_grad();
    loss.raw()->grad.f64()[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    steps_.clear();
  }

 private:
  std::vector<std::function<void()>> steps_;
  bool consumed_ = false;
};

}  // namespace mrkit::engine
