// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>

namespace mrkit::engine {

namespace {

using std::int64_t;

void require_f64(const Var& v, const char* op) {
  if (v.value().dtype() != DType::kF64) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(op) + ": expected f64 operand, got i64 " +
                    shape_str(v.value().shape()));
  }
}

// True if `small` equals the trailing dims of `big` (scalars are a suffix
// of everything).
bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinKind { kAdd, kSub, kMul };

// g has the big shape; accumulate block-sums into the small operand's grad.
void accumulate_reduced(const Tensor& g, Var target, double sign) {
  target.raw()->ensure_grad();
  auto dst = target.raw()->grad.f64();
  auto src = g.f64();
  const std::size_t inner = dst.size();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i % inner] += sign * src[i];
}

void accumulate_scaled(Var target, const Tensor& g, double sign) {
  target.raw()->ensure_grad();
  auto dst = target.raw()->grad.f64();
  auto src = g.f64();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += sign * src[i];
}

Var binary(Tape& tape, const Var& a, const Var& b, BinKind kind, const char* op) {
  require_f64(a, op);
  require_f64(b, op);
  const Shape& sa = a.value().shape();
  const Shape& sb = b.value().shape();
  bool a_big = true;
  if (sa == sb) {
    a_big = true;
  } else if (is_suffix(sb, sa)) {
    a_big = true;
  } else if (is_suffix(sa, sb)) {
    a_big = false;
  } else {
    throw Error(ErrorKind::kShapeMismatch, std::string(op) + ": " +
                                               shape_str(sa) + " vs " +
                                               shape_str(sb));
  }
  const Var& big = a_big ? a : b;
  const Var& small = a_big ? b : a;
  auto xb = big.value().f64();
  auto xs = small.value().f64();
  const std::size_t inner = xs.size();

  Tensor out = Tensor::zeros(big.value().shape());
  auto y = out.f64();
  switch (kind) {
    case BinKind::kAdd:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xb[i] + xs[i % inner];
      break;
    case BinKind::kSub:
      if (a_big) {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = xb[i] - xs[i % inner];
      } else {
        for (std::size_t i = 0; i < y.size(); ++i) y[i] = xs[i % inner] - xb[i];
      }
      break;
    case BinKind::kMul:
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = xb[i] * xs[i % inner];
      break;
  }

  Var result(std::move(out), a.requires_grad() || b.requires_grad());
  if (!result.requires_grad()) return result;

  tape.record([a, b, big, small, a_big, kind, result]() {
    const Tensor& g = result.raw()->grad;
    const double big_sign = (kind == BinKind::kSub && !a_big) ? -1.0 : 1.0;
    const double small_sign = (kind == BinKind::kSub && a_big) ? -1.0 : 1.0;
    if (kind == BinKind::kMul) {
      auto gs = g.f64();
      auto xb = big.value().f64();
      auto xs = small.value().f64();
      const std::size_t inner = xs.size();
      if (big.requires_grad()) {
        big.raw()->ensure_grad();
        auto dst = big.raw()->grad.f64();
        for (std::size_t i = 0; i < gs.size(); ++i)
          dst[i] += gs[i] * xs[i % inner];
      }
      if (small.requires_grad()) {
        small.raw()->ensure_grad();
        auto dst = small.raw()->grad.f64();
        for (std::size_t i = 0; i < gs.size(); ++i)
          dst[i % inner] += gs[i] * xb[i];
      }
    } else {
      if (big.requires_grad()) accumulate_scaled(big, g, big_sign);
      if (small.requires_grad()) accumulate_reduced(g, small, small_sign);
    }
  });
  return result;
}

// c[M,N] += a[M,K] @ b[K,N]
void gemm_nn(const double* a, const double* b, double* c, int64_t m,
             int64_t k_dim, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k_dim;
    for (int64_t k = 0; k < k_dim; ++k) {
      const double aik = ai[k];
      if (aik == 0.0) continue;
      const double* bk = b + k * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[M,N] += a[M,K] @ b[N,K]^T
void gemm_nt(const double* a, const double* bt, double* c, int64_t m,
             int64_t k_dim, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* ai = a + i * k_dim;
    double* ci = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* bj = bt + j * k_dim;
      double acc = 0.0;
      for (int64_t k = 0; k < k_dim; ++k) acc += ai[k] * bj[k];
      ci[j] += acc;
    }
  }
}

// c[M,N] += a[K,M]^T @ b[K,N]
void gemm_tn(const double* at, const double* b, double* c, int64_t m,
             int64_t k_dim, int64_t n) {
  for (int64_t k = 0; k < k_dim; ++k) {
    const double* ak = at + k * m;
    const double* bk = b + k * n;
    for (int64_t i = 0; i < m; ++i) {
      const double aki = ak[i];
      if (aki == 0.0) continue;
      double* ci = c + i * n;
      for (int64_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
    }
  }
}

struct ReduceDims {
  int64_t outer, n, inner;
};

ReduceDims split_axis(const Shape& shape, int axis) {
  ReduceDims d{1, shape[static_cast<std::size_t>(axis)], 1};
  for (int i = 0; i < axis; ++i) d.outer *= shape[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i)
    d.inner *= shape[i];
  return d;
}

int normalize_axis(int axis, int rank, const char* op) {
  int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(op) + ": axis " + std::to_string(axis) +
                    " out of range for rank " + std::to_string(rank));
  }
  return a;
}

template <typename Fwd, typename Bwd>
Var unary_elementwise(Tape& tape, const Var& x, const char* op, Fwd fwd, Bwd dydx) {
  require_f64(x, op);
  auto xs = x.value().f64();
  Tensor out = Tensor::zeros(x.value().shape());
  auto y = out.f64();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = fwd(xs[i]);
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, dydx]() {
    auto g = result.raw()->grad.f64();
    auto xs = x.value().f64();
    auto ys = result.value().f64();
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * dydx(xs[i], ys[i]);
  });
  return result;
}

double stable_softplus(double x) {
  // log(1 + e^x) without overflow on either side
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double stable_sigmoid(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

}  // namespace

Var constant(Tensor value) { return Var(std::move(value), false); }

Var add(Tape& tape, const Var& a, const Var& b) {
  return binary(tape, a, b, BinKind::kAdd, "add");
}
Var sub(Tape& tape, const Var& a, const Var& b) {
  return binary(tape, a, b, BinKind::kSub, "sub");
}
Var mul(Tape& tape, const Var& a, const Var& b) {
  return binary(tape, a, b, BinKind::kMul, "mul");
}

Var affine(Tape& tape, const Var& x, double a, double b) {
  require_f64(x, "affine");
  auto xs = x.value().f64();
  Tensor out = Tensor::zeros(x.value().shape());
  auto y = out.f64();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = a * xs[i] + b;
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, a]() {
    auto g = result.raw()->grad.f64();
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += a * g[i];
  });
  return result;
}

Var matmul(Tape& tape, const Var& a, const Var& b) {
  require_f64(a, "matmul");
  require_f64(b, "matmul");
  const Shape& sa = a.value().shape();
  const Shape& sb = b.value().shape();
  const int ra = static_cast<int>(sa.size());
  const int rb = static_cast<int>(sb.size());

  auto fail = [&] {
    throw Error(ErrorKind::kShapeMismatch,
                "matmul: " + shape_str(sa) + " vs " + shape_str(sb));
  };

  int64_t batch = 1, m = 0, k = 0, n = 0;
  bool batched_a = false, batched_b = false;
  if (ra == 2 && rb == 2) {
    m = sa[0]; k = sa[1]; n = sb[1];
    if (sb[0] != k) fail();
  } else if (ra == 3 && rb == 2) {
    batch = sa[0]; m = sa[1]; k = sa[2]; n = sb[1];
    batched_a = true;
    if (sb[0] != k) fail();
  } else if (ra == 3 && rb == 3) {
    batch = sa[0]; m = sa[1]; k = sa[2]; n = sb[2];
    batched_a = batched_b = true;
    if (sb[0] != batch || sb[1] != k) fail();
  } else {
    fail();
  }

  Shape out_shape = batched_a ? Shape{batch, m, n} : Shape{m, n};
  Tensor out = Tensor::zeros(out_shape);
  {
    const double* pa = a.value().f64().data();
    const double* pb = b.value().f64().data();
    double* pc = out.f64().data();
    for (int64_t s = 0; s < batch; ++s) {
      gemm_nn(pa + (batched_a ? s * m * k : 0), pb + (batched_b ? s * k * n : 0),
              pc + s * m * n, m, k, n);
    }
  }

  Var result(std::move(out), a.requires_grad() || b.requires_grad());
  if (!result.requires_grad()) return result;

  tape.record([a, b, result, batch, m, k, n, batched_a, batched_b]() {
    const double* g = result.raw()->grad.f64().data();
    const double* pa = a.value().f64().data();
    const double* pb = b.value().f64().data();
    if (a.requires_grad()) {
      a.raw()->ensure_grad();
      double* da = a.raw()->grad.f64().data();
      for (int64_t s = 0; s < batch; ++s) {
        // dA = G @ B^T
        gemm_nt(g + s * m * n, pb + (batched_b ? s * k * n : 0),
                da + (batched_a ? s * m * k : 0), m, n, k);
      }
    }
    if (b.requires_grad()) {
      b.raw()->ensure_grad();
      double* db = b.raw()->grad.f64().data();
      for (int64_t s = 0; s < batch; ++s) {
        // dB = A^T @ G (accumulates across the batch when B is shared)
        gemm_tn(pa + (batched_a ? s * m * k : 0), g + s * m * n,
                db + (batched_b ? s * k * n : 0), k, m, n);
      }
    }
  });
  return result;
}

Var transpose_last2(Tape& tape, const Var& x) {
  require_f64(x, "transpose_last2");
  const Shape& s = x.value().shape();
  if (s.size() < 2) {
    throw Error(ErrorKind::kShapeMismatch,
                "transpose_last2: rank must be >= 2, got " + shape_str(s));
  }
  Shape out_shape = s;
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const int64_t rows = s[s.size() - 2];
  const int64_t cols = s[s.size() - 1];
  const int64_t batch = x.value().numel() / (rows * cols);

  auto transpose_into = [rows, cols, batch](std::span<const double> src,
                                            std::span<double> dst, bool accumulate) {
    for (int64_t bi = 0; bi < batch; ++bi) {
      const double* in = src.data() + bi * rows * cols;
      double* out_p = dst.data() + bi * rows * cols;
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) {
          if (accumulate)
            out_p[r * cols + c] += in[c * rows + r];
          else
            out_p[c * rows + r] = in[r * cols + c];
        }
    }
  };

  Tensor out = Tensor::zeros(out_shape);
  transpose_into(x.value().f64(), out.f64(), false);
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, transpose_into]() {
    x.raw()->ensure_grad();
    transpose_into(result.raw()->grad.f64(), x.raw()->grad.f64(), true);
  });
  return result;
}

Var reshape(Tape& tape, const Var& x, Shape shape) {
  require_f64(x, "reshape");
  if (shape_numel(shape) != x.value().numel()) {
    throw Error(ErrorKind::kShapeMismatch,
                "reshape: " + shape_str(x.value().shape()) + " to " +
                    shape_str(shape) + " changes element count");
  }
  Tensor out = Tensor::from_f64(
      shape, std::vector<double>(x.value().f64().begin(), x.value().f64().end()));
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result]() {
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    auto g = result.raw()->grad.f64();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
  });
  return result;
}

Var broadcast_to(Tape& tape, const Var& x, const Shape& target) {
  require_f64(x, "broadcast_to");
  const Shape& s = x.value().shape();
  const int extra = static_cast<int>(target.size()) - static_cast<int>(s.size());
  auto fail = [&] {
    throw Error(ErrorKind::kShapeMismatch,
                "broadcast_to: " + shape_str(s) + " to " + shape_str(target));
  };
  if (extra < 0) fail();
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != target[i + static_cast<std::size_t>(extra)] && s[i] != 1) fail();
  }

  // Stride-0 view over the broadcast axes.
  const int out_rank = static_cast<int>(target.size());
  std::vector<int64_t> in_stride(static_cast<std::size_t>(out_rank), 0);
  {
    int64_t stride = 1;
    for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
      const int oi = i + extra;
      in_stride[static_cast<std::size_t>(oi)] =
          (s[static_cast<std::size_t>(i)] == 1 &&
           target[static_cast<std::size_t>(oi)] != 1)
              ? 0
              : stride;
      stride *= s[static_cast<std::size_t>(i)];
    }
  }

  const int64_t total = shape_numel(target);
  auto map_index = [out_rank, target, in_stride](int64_t flat) {
    int64_t src = 0;
    for (int i = out_rank - 1; i >= 0; --i) {
      const int64_t d = target[static_cast<std::size_t>(i)];
      src += (flat % d) * in_stride[static_cast<std::size_t>(i)];
      flat /= d;
    }
    return src;
  };

  Tensor out = Tensor::zeros(target);
  {
    auto xs = x.value().f64();
    auto y = out.f64();
    for (int64_t i = 0; i < total; ++i) y[i] = xs[map_index(i)];
  }
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, map_index, total]() {
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    auto g = result.raw()->grad.f64();
    for (int64_t i = 0; i < total; ++i) dst[map_index(i)] += g[i];
  });
  return result;
}

Var concat(Tape& tape, const std::vector<Var>& parts, int axis) {
  if (parts.empty()) {
    throw Error(ErrorKind::kShapeMismatch, "concat: no inputs");
  }
  const Shape& first = parts[0].value().shape();
  const int rank = static_cast<int>(first.size());
  const int ax = normalize_axis(axis, rank, "concat");
  Shape out_shape = first;
  int64_t axis_total = 0;
  bool any_grad = false;
  for (const Var& p : parts) {
    require_f64(p, "concat");
    const Shape& s = p.value().shape();
    if (static_cast<int>(s.size()) != rank) {
      throw Error(ErrorKind::kShapeMismatch,
                  "concat: " + shape_str(first) + " vs " + shape_str(s));
    }
    for (int i = 0; i < rank; ++i) {
      if (i != ax && s[static_cast<std::size_t>(i)] != first[static_cast<std::size_t>(i)]) {
        throw Error(ErrorKind::kShapeMismatch,
                    "concat: " + shape_str(first) + " vs " + shape_str(s));
      }
    }
    axis_total += s[static_cast<std::size_t>(ax)];
    any_grad = any_grad || p.requires_grad();
  }
  out_shape[static_cast<std::size_t>(ax)] = axis_total;

  const ReduceDims d = split_axis(out_shape, ax);
  Tensor out = Tensor::zeros(out_shape);
  {
    double* y = out.f64().data();
    int64_t offset = 0;
    for (const Var& p : parts) {
      const int64_t pn = p.value().shape()[static_cast<std::size_t>(ax)];
      const double* src = p.value().f64().data();
      for (int64_t o = 0; o < d.outer; ++o) {
        std::copy(src + o * pn * d.inner, src + (o + 1) * pn * d.inner,
                  y + o * d.n * d.inner + offset * d.inner);
      }
      offset += pn;
    }
  }

  Var result(std::move(out), any_grad);
  if (!any_grad) return result;
  tape.record([parts, result, d, ax]() {
    const double* g = result.raw()->grad.f64().data();
    int64_t offset = 0;
    for (const Var& p : parts) {
      const int64_t pn = p.value().shape()[static_cast<std::size_t>(ax)];
      if (p.requires_grad()) {
        p.raw()->ensure_grad();
        double* dst = p.raw()->grad.f64().data();
        for (int64_t o = 0; o < d.outer; ++o) {
          const double* gsrc = g + o * d.n * d.inner + offset * d.inner;
          double* pdst = dst + o * pn * d.inner;
          for (int64_t i = 0; i < pn * d.inner; ++i) pdst[i] += gsrc[i];
        }
      }
      offset += pn;
    }
  });
  return result;
}

Var narrow(Tape& tape, const Var& x, int axis, std::int64_t start, std::int64_t len) {
  require_f64(x, "narrow");
  const Shape& s = x.value().shape();
  const int ax = normalize_axis(axis, static_cast<int>(s.size()), "narrow");
  const int64_t n = s[static_cast<std::size_t>(ax)];
  if (start < 0 || len <= 0 || start + len > n) {
    throw Error(ErrorKind::kShapeMismatch,
                "narrow: [" + std::to_string(start) + ", " +
                    std::to_string(start + len) + ") out of range for axis " +
                    std::to_string(ax) + " of " + shape_str(s));
  }
  Shape out_shape = s;
  out_shape[static_cast<std::size_t>(ax)] = len;
  const ReduceDims d = split_axis(s, ax);

  Tensor out = Tensor::zeros(out_shape);
  {
    const double* src = x.value().f64().data();
    double* y = out.f64().data();
    for (int64_t o = 0; o < d.outer; ++o) {
      std::copy(src + (o * d.n + start) * d.inner,
                src + (o * d.n + start + len) * d.inner, y + o * len * d.inner);
    }
  }
  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, d, start, len]() {
    x.raw()->ensure_grad();
    double* dst = x.raw()->grad.f64().data();
    const double* g = result.raw()->grad.f64().data();
    for (int64_t o = 0; o < d.outer; ++o) {
      double* pdst = dst + (o * d.n + start) * d.inner;
      const double* gsrc = g + o * len * d.inner;
      for (int64_t i = 0; i < len * d.inner; ++i) pdst[i] += gsrc[i];
    }
  });
  return result;
}

Var lookup(Tape& tape, const Var& table, const Tensor& ids) {
  require_f64(table, "lookup");
  if (table.value().rank() != 2) {
    throw Error(ErrorKind::kShapeMismatch,
                "lookup: table must be rank 2, got " +
                    shape_str(table.value().shape()));
  }
  if (ids.dtype() != DType::kI64) {
    throw Error(ErrorKind::kShapeMismatch, "lookup: ids must be i64");
  }
  const int64_t vocab = table.value().dim(0);
  const int64_t width = table.value().dim(1);
  Shape out_shape = ids.shape();
  out_shape.push_back(width);

  Tensor out = Tensor::zeros(out_shape);
  {
    auto id_span = ids.i64();
    const double* t = table.value().f64().data();
    double* y = out.f64().data();
    for (std::size_t r = 0; r < id_span.size(); ++r) {
      const int64_t id = id_span[r];
      if (id < 0 || id >= vocab) {
        throw Error(ErrorKind::kIdOutOfRange,
                    "lookup: id " + std::to_string(id) + " outside [0, " +
                        std::to_string(vocab) + ")");
      }
      std::copy(t + id * width, t + (id + 1) * width, y + r * width);
    }
  }
  Var result(std::move(out), table.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([table, result, ids, width]() {
    table.raw()->ensure_grad();
    double* dst = table.raw()->grad.f64().data();
    const double* g = result.raw()->grad.f64().data();
    auto id_span = ids.i64();
    for (std::size_t r = 0; r < id_span.size(); ++r) {
      double* row = dst + id_span[r] * width;
      const double* gr = g + r * width;
      for (int64_t c = 0; c < width; ++c) row[c] += gr[c];
    }
  });
  return result;
}

Var sigmoid(Tape& tape, const Var& x) {
  return unary_elementwise(
      tape, x, "sigmoid", [](double v) { return stable_sigmoid(v); },
      [](double, double y) { return y * (1.0 - y); });
}

Var tanh_op(Tape& tape, const Var& x) {
  return unary_elementwise(
      tape, x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var relu(Tape& tape, const Var& x) {
  return unary_elementwise(
      tape, x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var softplus(Tape& tape, const Var& x) {
  return unary_elementwise(
      tape, x, "softplus", [](double v) { return stable_softplus(v); },
      [](double v, double) { return stable_sigmoid(v); });
}

Var masked_softmax(Tape& tape, const Var& logits, const Tensor& mask, int axis) {
  require_f64(logits, "masked_softmax");
  const Shape& s = logits.value().shape();
  const int rank = static_cast<int>(s.size());
  const int ax = normalize_axis(axis, rank, "masked_softmax");
  if (mask.dtype() != DType::kF64) {
    throw Error(ErrorKind::kShapeMismatch, "masked_softmax: mask must be f64");
  }
  for (double v : mask.f64()) {
    if (v != 0.0 && v != 1.0) {
      throw Error(ErrorKind::kShapeMismatch,
                  "masked_softmax: mask entries must be 0 or 1");
    }
  }

  const ReduceDims d = split_axis(s, ax);
  // Either a full mask or a [dim0, dim(axis)] mask shared across middle dims
  // (the attention case), which requires axis to be last.
  enum class MaskMode { kFull, kRow } mode;
  int64_t row_repeat = 1;
  if (mask.shape() == s) {
    mode = MaskMode::kFull;
  } else if (rank >= 2 && ax == rank - 1 && mask.rank() == 2 &&
             mask.dim(0) == s[0] && mask.dim(1) == d.n) {
    mode = MaskMode::kRow;
    row_repeat = d.outer / s[0];
  } else {
    throw Error(ErrorKind::kShapeMismatch,
                "masked_softmax: mask " + shape_str(mask.shape()) +
                    " does not align with logits " + shape_str(s) +
                    " on axis " + std::to_string(ax));
  }

  auto mask_at = [&, mode, row_repeat](int64_t o, int64_t j, int64_t in) {
    if (mode == MaskMode::kFull) {
      return mask.f64()[(o * d.n + j) * d.inner + in];
    }
    return mask.f64()[(o / row_repeat) * d.n + j];
  };

  Tensor out = Tensor::zeros(s);
  {
    auto xs = logits.value().f64();
    auto y = out.f64();
    for (int64_t o = 0; o < d.outer; ++o) {
      for (int64_t in = 0; in < d.inner; ++in) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < d.n; ++j) {
          if (mask_at(o, j, in) != 0.0)
            mx = std::max(mx, xs[(o * d.n + j) * d.inner + in]);
        }
        if (!std::isfinite(mx)) {
          throw Error(ErrorKind::kMaskAllZero,
                      "masked_softmax: a softmax slice has no unmasked position");
        }
        double z = 0.0;
        for (int64_t j = 0; j < d.n; ++j) {
          const int64_t idx = (o * d.n + j) * d.inner + in;
          if (mask_at(o, j, in) != 0.0) {
            y[idx] = std::exp(xs[idx] - mx);
            z += y[idx];
          }
        }
        for (int64_t j = 0; j < d.n; ++j) {
          const int64_t idx = (o * d.n + j) * d.inner + in;
          y[idx] /= z;  // masked cells stay exactly 0
        }
      }
    }
  }

  Var result(std::move(out), logits.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([logits, result, d]() {
    logits.raw()->ensure_grad();
    auto dst = logits.raw()->grad.f64();
    auto g = result.raw()->grad.f64();
    auto p = result.value().f64();
    for (int64_t o = 0; o < d.outer; ++o) {
      for (int64_t in = 0; in < d.inner; ++in) {
        double dot = 0.0;
        for (int64_t j = 0; j < d.n; ++j) {
          const int64_t idx = (o * d.n + j) * d.inner + in;
          dot += g[idx] * p[idx];
        }
        for (int64_t j = 0; j < d.n; ++j) {
          const int64_t idx = (o * d.n + j) * d.inner + in;
          dst[idx] += p[idx] * (g[idx] - dot);
        }
      }
    }
  });
  return result;
}

namespace {

enum class ReduceKind { kSum, kMean, kMax };

Var reduce(Tape& tape, const Var& x, std::optional<int> axis, ReduceKind kind,
           const char* op) {
  require_f64(x, op);
  const Shape& s = x.value().shape();

  if (!axis.has_value()) {
    // Full reduction to a scalar.
    auto xs = x.value().f64();
    const int64_t n = x.value().numel();
    if (n == 0) {
      throw Error(ErrorKind::kShapeMismatch,
                  std::string(op) + ": cannot reduce an empty tensor");
    }
    double acc;
    int64_t arg = 0;
    if (kind == ReduceKind::kMax) {
      acc = xs[0];
      for (int64_t i = 1; i < n; ++i)
        if (xs[i] > acc) { acc = xs[i]; arg = i; }
    } else {
      acc = 0.0;
      for (int64_t i = 0; i < n; ++i) acc += xs[i];
      if (kind == ReduceKind::kMean) acc /= static_cast<double>(n);
    }
    Var result(Tensor::scalar(acc), x.requires_grad());
    if (!result.requires_grad()) return result;
    tape.record([x, result, kind, n, arg]() {
      x.raw()->ensure_grad();
      auto dst = x.raw()->grad.f64();
      const double g = result.raw()->grad.f64()[0];
      switch (kind) {
        case ReduceKind::kSum:
          for (auto& v : dst) v += g;
          break;
        case ReduceKind::kMean:
          for (auto& v : dst) v += g / static_cast<double>(n);
          break;
        case ReduceKind::kMax:
          dst[arg] += g;
          break;
      }
    });
    return result;
  }

  const int ax = normalize_axis(*axis, static_cast<int>(s.size()), op);
  const ReduceDims d = split_axis(s, ax);
  if (d.n == 0) {
    throw Error(ErrorKind::kShapeMismatch,
                std::string(op) + ": cannot reduce empty axis of " + shape_str(s));
  }
  Shape out_shape;
  for (int i = 0; i < static_cast<int>(s.size()); ++i)
    if (i != ax) out_shape.push_back(s[static_cast<std::size_t>(i)]);

  Tensor out = Tensor::zeros(out_shape);
  // Argmax per output cell (first max wins) for the max backward rule.
  std::shared_ptr<std::vector<int64_t>> argmax;
  if (kind == ReduceKind::kMax)
    argmax = std::make_shared<std::vector<int64_t>>(
        static_cast<std::size_t>(d.outer * d.inner), 0);
  {
    auto xs = x.value().f64();
    auto y = out.f64();
    for (int64_t o = 0; o < d.outer; ++o) {
      for (int64_t in = 0; in < d.inner; ++in) {
        const int64_t cell = o * d.inner + in;
        if (kind == ReduceKind::kMax) {
          double best = xs[(o * d.n) * d.inner + in];
          int64_t bj = 0;
          for (int64_t j = 1; j < d.n; ++j) {
            const double v = xs[(o * d.n + j) * d.inner + in];
            if (v > best) { best = v; bj = j; }
          }
          y[cell] = best;
          (*argmax)[static_cast<std::size_t>(cell)] = bj;
        } else {
          double acc = 0.0;
          for (int64_t j = 0; j < d.n; ++j) acc += xs[(o * d.n + j) * d.inner + in];
          y[cell] = kind == ReduceKind::kMean ? acc / static_cast<double>(d.n) : acc;
        }
      }
    }
  }

  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, d, kind, argmax]() {
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    auto g = result.raw()->grad.f64();
    for (int64_t o = 0; o < d.outer; ++o) {
      for (int64_t in = 0; in < d.inner; ++in) {
        const int64_t cell = o * d.inner + in;
        switch (kind) {
          case ReduceKind::kSum:
            for (int64_t j = 0; j < d.n; ++j)
              dst[(o * d.n + j) * d.inner + in] += g[cell];
            break;
          case ReduceKind::kMean:
            for (int64_t j = 0; j < d.n; ++j)
              dst[(o * d.n + j) * d.inner + in] += g[cell] / static_cast<double>(d.n);
            break;
          case ReduceKind::kMax:
            dst[(o * d.n + (*argmax)[static_cast<std::size_t>(cell)]) * d.inner + in] +=
                g[cell];
            break;
        }
      }
    }
  });
  return result;
}

}  // namespace

Var reduce_sum(Tape& tape, const Var& x, std::optional<int> axis) {
  return reduce(tape, x, axis, ReduceKind::kSum, "reduce_sum");
}
Var reduce_mean(Tape& tape, const Var& x, std::optional<int> axis) {
  return reduce(tape, x, axis, ReduceKind::kMean, "reduce_mean");
}
Var reduce_max(Tape& tape, const Var& x, std::optional<int> axis) {
  return reduce(tape, x, axis, ReduceKind::kMax, "reduce_max");
}

Var dropout(Tape& tape, const Var& x, double p, bool training, Rng& rng) {
  require_f64(x, "dropout");
  if (p < 0.0 || p >= 1.0) {
    throw Error(ErrorKind::kShapeMismatch,
                "dropout: p must be in [0, 1), got " + std::to_string(p));
  }
  if (!training || p == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - p);
  auto keep = std::make_shared<std::vector<double>>(x.value().f64().size());
  for (double& m : *keep) m = rng.uniform() >= p ? keep_scale : 0.0;

  auto xs = x.value().f64();
  Tensor out = Tensor::zeros(x.value().shape());
  auto y = out.f64();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xs[i] * (*keep)[i];

  Var result(std::move(out), x.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([x, result, keep]() {
    x.raw()->ensure_grad();
    auto dst = x.raw()->grad.f64();
    auto g = result.raw()->grad.f64();
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (*keep)[i];
  });
  return result;
}

Var cross_entropy(Tape& tape, const Var& logits, const Tensor& labels) {
  require_f64(logits, "cross_entropy");
  if (logits.value().rank() != 2) {
    throw Error(ErrorKind::kShapeMismatch,
                "cross_entropy: logits must be [batch, classes], got " +
                    shape_str(logits.value().shape()));
  }
  if (labels.dtype() != DType::kI64 || labels.rank() != 1 ||
      labels.dim(0) != logits.value().dim(0)) {
    throw Error(ErrorKind::kShapeMismatch,
                "cross_entropy: labels must be i64 [batch], got " +
                    shape_str(labels.shape()) + " for logits " +
                    shape_str(logits.value().shape()));
  }
  const int64_t batch = logits.value().dim(0);
  const int64_t classes = logits.value().dim(1);

  Tensor out = Tensor::zeros({batch});
  {
    auto xs = logits.value().f64();
    auto ls = labels.i64();
    auto y = out.f64();
    for (int64_t b = 0; b < batch; ++b) {
      const int64_t label = ls[b];
      if (label < 0 || label >= classes) {
        throw Error(ErrorKind::kIdOutOfRange,
                    "cross_entropy: label " + std::to_string(label) +
                        " outside [0, " + std::to_string(classes) + ")");
      }
      const double* row = xs.data() + b * classes;
      double mx = row[0];
      for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
      double z = 0.0;
      for (int64_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
      y[b] = mx + std::log(z) - row[label];
    }
  }

  Var result(std::move(out), logits.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([logits, result, labels, batch, classes]() {
    logits.raw()->ensure_grad();
    auto dst = logits.raw()->grad.f64();
    auto xs = logits.value().f64();
    auto g = result.raw()->grad.f64();
    auto ls = labels.i64();
    for (int64_t b = 0; b < batch; ++b) {
      const double* row = xs.data() + b * classes;
      double mx = row[0];
      for (int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
      double z = 0.0;
      for (int64_t c = 0; c < classes; ++c) z += std::exp(row[c] - mx);
      for (int64_t c = 0; c < classes; ++c) {
        const double p = std::exp(row[c] - mx) / z;
        dst[b * classes + c] += g[b] * (p - (c == ls[b] ? 1.0 : 0.0));
      }
    }
  });
  return result;
}

Var binary_logistic_loss(Tape& tape, const Var& scores, const Tensor& labels) {
  require_f64(scores, "binary_logistic_loss");
  if (labels.dtype() != DType::kF64 || labels.shape() != scores.value().shape()) {
    throw Error(ErrorKind::kShapeMismatch,
                "binary_logistic_loss: labels " + shape_str(labels.shape()) +
                    " vs scores " + shape_str(scores.value().shape()));
  }
  for (double y : labels.f64()) {
    if (y != 1.0 && y != -1.0) {
      throw Error(ErrorKind::kShapeMismatch,
                  "binary_logistic_loss: labels must be +1 or -1");
    }
  }
  auto xs = scores.value().f64();
  auto ys = labels.f64();
  Tensor out = Tensor::zeros(scores.value().shape());
  auto o = out.f64();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = stable_softplus(-ys[i] * xs[i]);

  Var result(std::move(out), scores.requires_grad());
  if (!result.requires_grad()) return result;
  tape.record([scores, result, labels]() {
    scores.raw()->ensure_grad();
    auto dst = scores.raw()->grad.f64();
    auto xs = scores.value().f64();
    auto ys = labels.f64();
    auto g = result.raw()->grad.f64();
    for (std::size_t i = 0; i < g.size(); ++i) {
      dst[i] += g[i] * -ys[i] * stable_sigmoid(-ys[i] * xs[i]);
    }
  });
  return result;
}

}  // namespace mrkit::engine
