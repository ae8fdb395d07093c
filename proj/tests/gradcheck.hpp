// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "mrkit/autodiff.hpp"
#include "mrkit/ops.hpp"
#include "mrkit/rng.hpp"

namespace mrkit::testing {

// Builds a fresh scalar loss from the given parameter Vars. The builder must
// be a pure function of the parameter values (re-seed any Rng it uses).
using LossBuilder =
    std::function<engine::Var(engine::Tape&, std::vector<engine::Var>&)>;

inline double eval_loss(const LossBuilder& build,
                        const std::vector<engine::Tensor>& values) {
  engine::Tape tape;
  std::vector<engine::Var> params;
  params.reserve(values.size());
  for (const auto& v : values) params.emplace_back(v, false);
  return build(tape, params).value().scalar_value();
}

// Max relative error between analytic gradients and central finite
// differences over every element of every parameter.
inline double max_grad_rel_error(const LossBuilder& build,
                                 std::vector<engine::Tensor> values,
                                 double h = 1e-5) {
  // Analytic pass.
  engine::Tape tape;
  std::vector<engine::Var> params;
  params.reserve(values.size());
  for (const auto& v : values) params.emplace_back(v, true);
  engine::Var loss = build(tape, params);
  tape.backward(loss);

  double worst = 0.0;
  for (std::size_t p = 0; p < values.size(); ++p) {
    auto base = values[p].f64();
    auto analytic = params[p].grad().f64();
    for (std::size_t i = 0; i < base.size(); ++i) {
      const double keep = base[i];
      base[i] = keep + h;
      const double up = eval_loss(build, values);
      base[i] = keep - h;
      const double down = eval_loss(build, values);
      base[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      const double denom =
          std::max({std::abs(analytic[i]), std::abs(numeric), 1e-3});
      worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
  }
  return worst;
}

// Random f64 tensor with entries in [lo, hi].
inline engine::Tensor random_tensor(engine::Shape shape, Rng& rng,
                                    double lo = -1.0, double hi = 1.0) {
  engine::Tensor t = engine::Tensor::zeros(std::move(shape));
  for (double& v : t.f64()) v = rng.uniform(lo, hi);
  return t;
}

// Fixed random projection weights used to collapse a tensor-valued op to a
// scalar without letting elementwise errors cancel.
inline engine::Var project_to_scalar(engine::Tape& tape, const engine::Var& x,
                                     std::uint64_t seed) {
  Rng rng(seed);
  engine::Tensor w = random_tensor(x.value().shape(), rng, 0.25, 1.75);
  return engine::reduce_sum(tape, engine::mul(tape, x, engine::constant(w)));
}

// Worst relative error across every primitive for one seed. Shared by the
// engine unit tests and the acceptance gradient suite.
inline double worst_primitive_grad_error(std::uint64_t seed) {
  using namespace engine;
  Rng rng(seed * 7919);
  double worst = 0.0;

  auto single = [&](LossBuilder build, std::vector<Tensor> params) {
    worst = std::max(worst, max_grad_rel_error(build, std::move(params)));
  };

  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, add(t, p[0], p[1]), seed);
      },
      {random_tensor({2, 3}, rng), random_tensor({2, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, add(t, p[0], p[1]), seed);
      },
      {random_tensor({2, 4, 3}, rng), random_tensor({3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, sub(t, p[0], p[1]), seed);
      },
      {random_tensor({3}, rng), random_tensor({2, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, mul(t, p[0], p[1]), seed);
      },
      {random_tensor({4}, rng), random_tensor({4}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, mul(t, p[0], p[1]), seed);
      },
      {random_tensor({2, 2, 3}, rng), random_tensor({2, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, affine(t, p[0], 1.7, -0.3), seed);
      },
      {random_tensor({3, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, matmul(t, p[0], p[1]), seed);
      },
      {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, matmul(t, p[0], p[1]), seed);
      },
      {random_tensor({2, 3, 4}, rng), random_tensor({4, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, matmul(t, p[0], p[1]), seed);
      },
      {random_tensor({2, 3, 4}, rng), random_tensor({2, 4, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, transpose_last2(t, p[0]), seed);
      },
      {random_tensor({2, 3, 4}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, reshape(t, p[0], {3, 4}), seed);
      },
      {random_tensor({2, 3, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, broadcast_to(t, p[0], {4, 2, 3}), seed);
      },
      {random_tensor({2, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, broadcast_to(t, p[0], {2, 5, 3}), seed);
      },
      {random_tensor({2, 1, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, concat(t, {p[0], p[1]}, 1), seed);
      },
      {random_tensor({2, 3}, rng), random_tensor({2, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, narrow(t, p[0], 1, 1, 2), seed);
      },
      {random_tensor({2, 4, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Tensor ids = Tensor::from_i64({2, 3}, {0, 2, 1, 2, 2, 0});
        return project_to_scalar(t, lookup(t, p[0], ids), seed);
      },
      {random_tensor({3, 4}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, sigmoid(t, p[0]), seed);
      },
      {random_tensor({2, 3}, rng, -3.0, 3.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, tanh_op(t, p[0]), seed);
      },
      {random_tensor({2, 3}, rng, -3.0, 3.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, relu(t, p[0]), seed);
      },
      // keep |x| > 0.1 so the central difference is valid at the kink
      {[&] {
        Tensor x = random_tensor({2, 3}, rng, 0.1, 2.0);
        for (std::size_t i = 0; i < x.f64().size(); ++i)
          if (i % 2 == 0) x.f64()[i] = -x.f64()[i];
        return x;
      }()});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, softplus(t, p[0]), seed);
      },
      {random_tensor({2, 3}, rng, -3.0, 3.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Tensor mask = Tensor::from_f64({2, 4}, {1, 1, 0, 1, 0, 1, 1, 1});
        return project_to_scalar(t, masked_softmax(t, p[0], mask, -1), seed);
      },
      {random_tensor({2, 4}, rng, -2.0, 2.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Tensor mask = Tensor::from_f64({2, 3}, {1, 1, 0, 1, 1, 1});
        return project_to_scalar(t, masked_softmax(t, p[0], mask, -1), seed);
      },
      {random_tensor({2, 2, 3}, rng, -2.0, 2.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, reduce_sum(t, p[0], 1), seed);
      },
      {random_tensor({2, 3, 2}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, reduce_mean(t, p[0], 0), seed);
      },
      {random_tensor({3, 2}, rng)});
  single([](Tape& t, std::vector<Var>& p) { return reduce_mean(t, p[0]); },
         {random_tensor({2, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        return project_to_scalar(t, reduce_max(t, p[0], 1), seed);
      },
      // well-separated values keep the argmax stable under +-h
      {[&] {
        Tensor x = Tensor::zeros({2, 4, 2});
        for (std::size_t i = 0; i < x.f64().size(); ++i)
          x.f64()[i] = static_cast<double>(i % 7) + 0.05 * rng.uniform();
        return x;
      }()});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Rng r(seed);  // re-seeded per forward: the mask is a pure function
        return project_to_scalar(t, dropout(t, p[0], 0.4, true, r), seed);
      },
      {random_tensor({3, 3}, rng)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Tensor labels = Tensor::from_i64({3}, {0, 2, 1});
        return project_to_scalar(t, cross_entropy(t, p[0], labels), seed);
      },
      {random_tensor({3, 3}, rng, -2.0, 2.0)});
  single(
      [seed](Tape& t, std::vector<Var>& p) {
        Tensor labels = Tensor::from_f64({4}, {1, -1, -1, 1});
        return project_to_scalar(t, binary_logistic_loss(t, p[0], labels), seed);
      },
      {random_tensor({4}, rng, -2.0, 2.0)});

  return worst;
}

}  // namespace mrkit::testing
