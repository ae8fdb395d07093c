// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/optimizer.hpp"

#include <cmath>

namespace mrkit::engine {

void AdamOptimizer::step(std::span<Var> params) {
  if (m_.empty()) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const Var& p : params) {
      m_.push_back(Tensor::zeros(p.value().shape()));
      v_.push_back(Tensor::zeros(p.value().shape()));
    }
  }
  if (m_.size() != params.size()) {
    throw Error(ErrorKind::kShapeMismatch,
                "adam: parameter list changed size, " +
                    std::to_string(m_.size()) + " vs " +
                    std::to_string(params.size()));
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Var& p = params[i];
    if (!p.value().same_shape(m_[i])) {
      throw Error(ErrorKind::kShapeMismatch,
                  "adam: parameter " + std::to_string(i) + " shape " +
                      shape_str(p.value().shape()) + " vs state " +
                      shape_str(m_[i].shape()));
    }
    auto w = p.value().f64();
    auto g = p.grad().f64();
    auto m = m_[i].f64();
    auto v = v_[i].f64();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      w[j] -= config_.lr * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }
}

}  // namespace mrkit::engine
