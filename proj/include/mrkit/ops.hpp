// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <vector>

#include "mrkit/autodiff.hpp"
#include "mrkit/rng.hpp"

namespace mrkit::engine {

// Primitive layer. Every op computes its forward value eagerly and, when any
// input requires grad, registers its backward rule on the tape.
//
// Broadcasting in binary elementwise ops is deliberately narrow: shapes must
// be equal, or one shape must be a suffix of the other (the smaller operand
// is tiled across the leading batch dims). Anything else is a ShapeMismatch.

Var constant(Tensor value);

Var add(Tape& tape, const Var& a, const Var& b);
Var sub(Tape& tape, const Var& a, const Var& b);
Var mul(Tape& tape, const Var& a, const Var& b);

// a * x + b, elementwise with scalars a and b.
Var affine(Tape& tape, const Var& x, double a, double b);
inline Var scale(Tape& tape, const Var& x, double a) { return affine(tape, x, a, 0.0); }
inline Var neg(Tape& tape, const Var& x) { return affine(tape, x, -1.0, 0.0); }

// Supported shapes: [M,K]x[K,N], [B,M,K]x[K,N], [B,M,K]x[B,K,N].
Var matmul(Tape& tape, const Var& a, const Var& b);
Var transpose_last2(Tape& tape, const Var& x);
Var reshape(Tape& tape, const Var& x, Shape shape);

// Tiles x up to `target`: x's shape must match the trailing dims of target,
// where size-1 dims of x may expand. Gradient sums over the expanded axes.
Var broadcast_to(Tape& tape, const Var& x, const Shape& target);

Var concat(Tape& tape, const std::vector<Var>& parts, int axis);
Var narrow(Tape& tape, const Var& x, int axis, std::int64_t start, std::int64_t len);

// Row gather: table [V,D], ids any-shape i64 -> ids.shape + [D].
Var lookup(Tape& tape, const Var& table, const Tensor& ids);

Var sigmoid(Tape& tape, const Var& x);
Var tanh_op(Tape& tape, const Var& x);
Var relu(Tape& tape, const Var& x);
Var softplus(Tape& tape, const Var& x);

// Softmax over `axis` restricted to positions where mask == 1; masked
// positions get probability exactly 0. mask is 0/1-valued f64, either
// shaped like logits or [logits.dim(0), logits.dim(axis)] with axis last.
Var masked_softmax(Tape& tape, const Var& logits, const Tensor& mask, int axis = -1);

// axis == nullopt reduces all dims to a scalar.
Var reduce_sum(Tape& tape, const Var& x, std::optional<int> axis = std::nullopt);
Var reduce_mean(Tape& tape, const Var& x, std::optional<int> axis = std::nullopt);
Var reduce_max(Tape& tape, const Var& x, std::optional<int> axis = std::nullopt);

// Inverted scaling: kept activations are multiplied by 1/(1-p) at train
// time so inference is the identity.
Var dropout(Tape& tape, const Var& x, double p, bool training, Rng& rng);

// logits [B,C], labels [B] i64 -> per-item loss [B] (log-sum-exp stable).
Var cross_entropy(Tape& tape, const Var& logits, const Tensor& labels);

// scores and labels same shape, labels in {-1,+1}: softplus(-y*s) per item.
Var binary_logistic_loss(Tape& tape, const Var& scores, const Tensor& labels);

}  // namespace mrkit::engine
