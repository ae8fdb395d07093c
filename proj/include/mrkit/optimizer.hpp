// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mrkit/autodiff.hpp"

namespace mrkit::engine {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment update. Moment buffers are keyed by
// position in the parameter list, so the caller must pass the same
// parameters in the same order on every step.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::int64_t step_count() const { return step_; }

  void step(std::span<Var> params);

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

}  // namespace mrkit::engine
