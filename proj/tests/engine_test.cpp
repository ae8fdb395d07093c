// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "gradcheck.hpp"
#include "mrkit/checkpoint.hpp"
#include "mrkit/optimizer.hpp"

using namespace mrkit;
using namespace mrkit::engine;
using mrkit::testing::max_grad_rel_error;
using mrkit::testing::project_to_scalar;
using mrkit::testing::random_tensor;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kIoError;
}

}  // namespace

TEST_CASE("forward values of hand-checked primitives") {
  Tape tape;
  SUBCASE("masked softmax splits mass over unmasked positions") {
    Var p = masked_softmax(tape, constant(Tensor::from_f64({3}, {1, 1, 1})),
                           Tensor::from_f64({3}, {1, 1, 0}));
    CHECK(p.value().f64()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.value().f64()[1] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.value().f64()[2] == 0.0);
  }
  SUBCASE("matmul of ones") {
    Var c = matmul(tape, constant(Tensor::full({2, 3}, 1.0)),
                   constant(Tensor::full({3, 1}, 1.0)));
    CHECK(c.value().shape() == Shape{2, 1});
    CHECK(c.value().f64()[0] == 3.0);
    CHECK(c.value().f64()[1] == 3.0);
  }
  SUBCASE("softplus at zero is ln 2") {
    Var y = softplus(tape, constant(Tensor::scalar(0.0)));
    CHECK(y.value().scalar_value() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }
  SUBCASE("bias broadcast over leading batch dims") {
    Var y = add(tape, constant(Tensor::full({2, 2, 3}, 1.0)),
                constant(Tensor::from_f64({3}, {1, 2, 3})));
    CHECK(y.value().f64()[0] == 2.0);
    CHECK(y.value().f64()[1] == 3.0);
    CHECK(y.value().f64()[2] == 4.0);
    CHECK(y.value().f64()[9] == 2.0);
  }
}

TEST_CASE("shape errors carry both shapes") {
  Tape tape;
  try {
    add(tape, constant(Tensor::zeros({2, 3})), constant(Tensor::zeros({2, 4})));
    FAIL("expected ShapeMismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kShapeMismatch);
    CHECK(std::string(e.what()).find("[2, 3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2, 4]") != std::string::npos);
  }
  CHECK(kind_of([&] {
          matmul(tape, constant(Tensor::zeros({2, 3})), constant(Tensor::zeros({4, 2})));
        }) == ErrorKind::kShapeMismatch);
}

TEST_CASE("masked softmax rejects an all-zero slice") {
  Tape tape;
  CHECK(kind_of([&] {
          masked_softmax(tape, constant(Tensor::from_f64({2, 2}, {1, 2, 3, 4})),
                         Tensor::from_f64({2, 2}, {1, 1, 0, 0}));
        }) == ErrorKind::kMaskAllZero);
}

TEST_CASE("masked softmax invariants on fuzzed inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    const std::int64_t b = 1 + rng.uniform_int(3);
    const std::int64_t q = 1 + rng.uniform_int(4);
    const std::int64_t s = 1 + rng.uniform_int(5);
    Tensor logits = random_tensor({b, q, s}, rng, -5.0, 5.0);
    Tensor mask = Tensor::zeros({b, s});
    for (std::int64_t i = 0; i < b; ++i) {
      const std::int64_t keep = 1 + rng.uniform_int(s);
      for (std::int64_t j = 0; j < keep; ++j) mask.f64()[i * s + j] = 1.0;
    }
    Tape tape;
    Var p = masked_softmax(tape, constant(logits), mask, -1);
    for (std::int64_t i = 0; i < b; ++i) {
      for (std::int64_t j = 0; j < q; ++j) {
        double total = 0.0;
        for (std::int64_t k = 0; k < s; ++k) {
          const double v = p.value().f64()[(i * q + j) * s + k];
          if (mask.f64()[i * s + k] == 0.0) CHECK(v == 0.0);
          total += v;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("backward on simple graphs") {
  SUBCASE("sum of squares") {
    Tape tape;
    Var x(Tensor::from_f64({3}, {1, 2, 3}), true);
    Var loss = reduce_sum(tape, mul(tape, x, x));
    tape.backward(loss);
    CHECK(x.grad().f64()[0] == doctest::Approx(2.0));
    CHECK(x.grad().f64()[1] == doctest::Approx(4.0));
    CHECK(x.grad().f64()[2] == doctest::Approx(6.0));
  }
  SUBCASE("fan-out accumulates") {
    Tape tape;
    Var a(Tensor::scalar(1.5), true);
    Var loss = add(tape, a, a);
    tape.backward(loss);
    CHECK(a.grad().f64()[0] == doctest::Approx(2.0));
  }
  SUBCASE("non-scalar loss rejected") {
    Tape tape;
    Var x(Tensor::zeros({2}), true);
    Var y = relu(tape, x);
    CHECK(kind_of([&] { tape.backward(y); }) == ErrorKind::kNotScalar);
  }
  SUBCASE("tape cannot run backward twice") {
    Tape tape;
    Var x(Tensor::scalar(2.0), true);
    Var loss = mul(tape, x, x);
    tape.backward(loss);
    CHECK(kind_of([&] { tape.backward(loss); }) == ErrorKind::kTapeConsumed);
  }
}

// Central-difference oracle over every primitive, 10 seeds each.
TEST_CASE("gradient check: every primitive vs central differences") {
  constexpr double kTol = 1e-6;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    CAPTURE(seed);
    CHECK(mrkit::testing::worst_primitive_grad_error(seed) < kTol);
  }
}

TEST_CASE("adam on a scalar quadratic matches an independent oracle") {
  const AdamConfig cfg{0.1, 0.9, 0.999, 1e-8};

  // Engine trajectory on f(w) = (w - 3)^2 from w = 0.
  Var w(Tensor::scalar(0.0), true);
  AdamOptimizer opt(cfg);
  std::vector<double> engine_traj;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    Var diff = affine(tape, w, 1.0, -3.0);
    Var loss = mul(tape, diff, diff);
    tape.backward(loss);
    std::vector<Var> params{w};
    opt.step(params);
    w.zero_grad();
    engine_traj.push_back(w.value().f64()[0]);
  }

  // Plain-double oracle, written independently of the engine.
  double ow = 0.0, m = 0.0, v = 0.0;
  for (int step = 1; step <= 200; ++step) {
    const double g = 2.0 * (ow - 3.0);
    m = cfg.beta1 * m + (1 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
    const double mh = m / (1 - std::pow(cfg.beta1, step));
    const double vh = v / (1 - std::pow(cfg.beta2, step));
    ow -= cfg.lr * mh / (std::sqrt(vh) + cfg.epsilon);
    CHECK(engine_traj[static_cast<std::size_t>(step - 1)] ==
          doctest::Approx(ow).epsilon(1e-12));
  }
  CHECK(std::abs(w.value().f64()[0] - 3.0) < 0.05);
}

TEST_CASE("adam first step moves by about -lr * sign(g)") {
  AdamConfig cfg;  // defaults: lr 1e-3
  Var w(Tensor::from_f64({2}, {0.5, -0.25}), true);
  w.grad().f64()[0] = 0.7;
  w.grad().f64()[1] = -1.3;
  AdamOptimizer opt(cfg);
  std::vector<Var> params{w};
  opt.step(params);
  CHECK(w.value().f64()[0] == doctest::Approx(0.5 - cfg.lr).epsilon(1e-4));
  CHECK(w.value().f64()[1] == doctest::Approx(-0.25 + cfg.lr).epsilon(1e-4));
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Var w(Tensor::from_f64({3}, {1.0, 2.0, 3.0}), true);
  w.grad();  // allocate zeros
  AdamOptimizer opt;
  std::vector<Var> params{w};
  opt.step(params);
  CHECK(w.value().f64()[0] == 1.0);
  CHECK(w.value().f64()[1] == 2.0);
  CHECK(w.value().f64()[2] == 3.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("checkpoint round trip and corruption detection") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "mrkit_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "params.ckpt").string();

  Rng rng(5);
  std::vector<NamedTensor> tensors;
  tensors.push_back({"layer0.weight", random_tensor({3, 4}, rng)});
  tensors.push_back({"ids", Tensor::from_i64({2}, {7, -9})});
  tensors.push_back({"scalar", Tensor::scalar(0.125)});
  write_checkpoint(path, tensors);

  auto loaded = read_checkpoint(path);
  REQUIRE(loaded.size() == 3);
  CHECK(loaded[0].name == "layer0.weight");
  CHECK(loaded[0].tensor.shape() == Shape{3, 4});
  for (std::size_t i = 0; i < 12; ++i)
    CHECK(loaded[0].tensor.f64()[i] == tensors[0].tensor.f64()[i]);
  CHECK(loaded[1].tensor.i64()[1] == -9);
  CHECK(loaded[2].tensor.scalar_value() == 0.125);

  SUBCASE("truncated payload") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 5));
    out.close();
    CHECK(kind_of([&] { read_checkpoint(path); }) ==
          ErrorKind::kCorruptCheckpoint);
  }
  SUBCASE("version bump") {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes[4] = 9;
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK(kind_of([&] { read_checkpoint(path); }) ==
          ErrorKind::kVersionMismatch);
  }
  SUBCASE("missing file") {
    CHECK(kind_of([&] { read_checkpoint((dir / "nope.ckpt").string()); }) ==
          ErrorKind::kCorruptCheckpoint);
  }
}

TEST_CASE("rng is reproducible and shuffle is a permutation") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7};
  Rng c(7);
  c.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7});
  std::vector<int> w{0, 1, 2, 3, 4, 5, 6, 7};
  Rng d(7);
  d.shuffle(w);
  CHECK(v == w);
}
