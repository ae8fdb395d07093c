// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "mrkit/dslmodel.hpp"
#include "testsupport.hpp"

using namespace mrkit;
using namespace mrkit::dsl;

namespace {

const std::string kConfigDir = std::string(MRKIT_TEST_DIR) + "/../configs/";

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an Error");
  return ErrorKind::kIoError;
}

textpipe::Vocab small_vocab(int words) {
  std::string text;
  for (int i = 0; i < words; ++i) text += "word" + std::to_string(i) + " ";
  return textpipe::build_vocab({text}, 1);
}

std::string wrap_blocks(const std::string& blocks) {
  return "blocks:\n" + blocks;
}

}  // namespace

TEST_CASE("parse_arch applies the output-key defaulting rule") {
  auto specs = parse_arch(wrap_blocks(
      "  - type: dense\n    input: support\n    units: 8\n"));
  REQUIRE(specs.size() == 1);
  CHECK(specs[0].type == BlockType::kDense);
  CHECK(specs[0].input_keys == std::vector<std::string>{"support"});
  CHECK(specs[0].output_key == "support");  // defaults to the input key
  CHECK(specs[0].hyper_int("units", 0) == 8);

  auto multi = parse_arch(wrap_blocks(
      "  - type: attention\n    input: [question_enc, support_enc]\n"));
  CHECK(multi[0].output_key == "question_enc");  // first of the list
}

TEST_CASE("parse_arch reports unknown blocks with a suggestion") {
  try {
    parse_arch(wrap_blocks("  - type: nonsense_block\n    input: support\n"));
    FAIL("expected UnknownBlock");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kUnknownBlock);
    CHECK(std::string(e.what()).find("nonsense_block") != std::string::npos);
    CHECK(std::string(e.what()).find("did you mean") != std::string::npos);
  }
  try {
    parse_arch(wrap_blocks("  - type: atention\n    input: [a, b]\n"));
    FAIL("expected UnknownBlock");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("\"attention\"") != std::string::npos);
  }
}

TEST_CASE("parse_arch checks arity and syntax") {
  CHECK(kind_of([] {
          parse_arch(wrap_blocks("  - type: attention\n    input: question\n"));
        }) == ErrorKind::kBadArity);
  CHECK(kind_of([] {
          parse_arch(wrap_blocks("  - type: combine\n    input: [a, b, c]\n"));
        }) == ErrorKind::kBadArity);
  try {
    parse_arch("blocks:\n  - type: [broken\n");
    FAIL("expected ParseError");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kParseError);
    CHECK(std::string(e.what()).find("line") != std::string::npos);
  }
  CHECK(kind_of([] { parse_arch("no_blocks: here\n"); }) == ErrorKind::kParseError);
  CHECK(kind_of([] {
          parse_arch(wrap_blocks("  - type: span_head\n    input: [a, b]\n"
                                 "    output: oops\n"));
        }) == ErrorKind::kParseError);
}

TEST_CASE("build_graph infers shapes along the block sequence") {
  ArchDims dims{16, 8};
  SUBCASE("embed lifts an id sequence into vectors") {
    auto graph = build_graph(
        parse_arch(wrap_blocks("  - type: embed\n    input: support\n"
                               "    output: s_emb\n"
                               "  - type: dense\n    input: s_emb\n"
                               "    output: s_proj\n    units: 16\n"
                               "  - type: pool\n    input: s_proj\n"
                               "    output: s_vec\n"
                               "  - type: dense\n    input: s_vec\n"
                               "    output: s_hidden\n    units: 16\n"
                               "  - type: classifier\n    input: s_hidden\n"
                               "    output: logits\n    classes: 3\n")),
        Task::kNli, dims);
    const SymShape expected{std::string("batch"), std::string("support_len"),
                            std::int64_t{8}};
    CHECK(graph.keys.at("s_emb").shape == expected);
    CHECK(graph.keys.at("s_vec").shape ==
          SymShape{std::string("batch"), std::int64_t{16}});
    CHECK(graph.keys.at("logits").shape ==
          SymShape{std::string("batch"), std::int64_t{3}});
    CHECK(graph.shape_table().find("s_emb: [batch, support_len, 8]") !=
          std::string::npos);
  }
  SUBCASE("the full NLI chain type-checks") {
    CHECK_NOTHROW(compile_arch(
        corpus::read_text_file(kConfigDir + "nli_baseline.yaml"), Task::kNli,
        dims));
  }
  SUBCASE("the full QA chain type-checks") {
    CHECK_NOTHROW(compile_arch(
        corpus::read_text_file(kConfigDir + "qa_span_baseline.yaml"), Task::kQa,
        dims));
  }
}

TEST_CASE("build_graph rejects the named error cases with locations") {
  ArchDims dims{16, 8};
  auto build = [&](const std::string& blocks, Task task = Task::kNli) {
    return build_graph(parse_arch(wrap_blocks(blocks)), task, dims);
  };

  SUBCASE("undefined key") {
    try {
      build("  - type: dense\n    input: no_such_key\n    output: x\n");
      FAIL("expected UndefinedKey");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kUndefinedKey);
      CHECK(std::string(e.what()).find("no_such_key") != std::string::npos);
      CHECK(std::string(e.what()).find("block 0") != std::string::npos);
    }
  }
  SUBCASE("redefinition via the defaulting rule") {
    try {
      build("  - type: embed\n    input: support\n");
      FAIL("expected KeyRedefinition");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kKeyRedefinition);
      CHECK(std::string(e.what()).find("\"support\"") != std::string::npos);
    }
  }
  SUBCASE("pooling an already pooled tensor is a rank error") {
    try {
      build(
          "  - type: embed\n    input: support\n    output: s\n"
          "  - type: pool\n    input: s\n    output: v\n"
          "  - type: pool\n    input: v\n    output: v2\n");
      FAIL("expected ShapeError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShapeError);
      CHECK(std::string(e.what()).find("block 2") != std::string::npos);
      CHECK(std::string(e.what()).find("rank too low") != std::string::npos);
    }
  }
  SUBCASE("missing terminal") {
    CHECK(kind_of([&] {
            build("  - type: embed\n    input: support\n    output: s\n");
          }) == ErrorKind::kMissingTerminal);
  }
  SUBCASE("terminal with the wrong shape") {
    try {
      build(
          "  - type: embed\n    input: support\n    output: s\n"
          "  - type: pool\n    input: s\n    output: v\n"
          "  - type: classifier\n    input: v\n    output: logits\n"
          "    classes: 4\n");
      FAIL("expected ShapeError");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kShapeError);
      CHECK(std::string(e.what()).find("logits") != std::string::npos);
    }
  }
  SUBCASE("dot attention with mismatched dims") {
    CHECK(kind_of([&] {
            build(
                "  - type: embed\n    input: question\n    output: q\n"
                "  - type: embed\n    input: support\n    output: s\n"
                "  - type: dense\n    input: q\n    output: q2\n    units: 12\n"
                "  - type: attention\n    input: [q2, s]\n    output: ctx\n");
          }) == ErrorKind::kShapeError);
  }
  SUBCASE("span head demands a support-aligned sequence") {
    CHECK(kind_of([&] {
            build(
                "  - type: embed\n    input: question\n    output: q\n"
                "  - type: pool\n    input: q\n    output: qv\n"
                "  - type: span_head\n    input: [q, qv]\n",
                Task::kQa);
          }) == ErrorKind::kShapeError);
  }
}

TEST_CASE("instantiate allocates the documented parameter counts") {
  ArchDims dims{16, 4};
  auto graph = build_graph(
      parse_arch(wrap_blocks("  - type: embed\n    input: support\n"
                             "    output: s\n"
                             "  - type: dense\n    input: s\n"
                             "    output: h\n    units: 8\n"
                             "  - type: pool\n    input: h\n    output: v\n"
                             "  - type: classifier\n    input: v\n"
                             "    output: logits\n    classes: 3\n")),
      Task::kNli, dims);
  auto model = instantiate(graph);
  auto vocab = small_vocab(5);  // 7 rows with PAD/UNK
  model->setup(vocab, 42);
  // embed table 7*4, dense 4*8 + 8 = 40, classifier 8*3 + 3 = 27
  CHECK(model->parameter_count() == 7 * 4 + 40 + 27);

  SUBCASE("same seed gives identical initial parameter bytes") {
    auto model2 = instantiate(graph);
    model2->setup(vocab, 42);
    auto p1 = model->parameters();
    auto p2 = model2->parameters();
    REQUIRE(p1.size() == p2.size());
    for (std::size_t i = 0; i < p1.size(); ++i) {
      CHECK(p1[i].first == p2[i].first);
      const auto a = p1[i].second.value().f64();
      const auto b = p2[i].second.value().f64();
      REQUIRE(a.size() == b.size());
      for (std::size_t j = 0; j < a.size(); ++j) CHECK(a[j] == b[j]);
    }
  }
  SUBCASE("a different seed changes them") {
    auto model3 = instantiate(graph);
    model3->setup(vocab, 43);
    bool any_different = false;
    auto p1 = model->parameters();
    auto p3 = model3->parameters();
    for (std::size_t i = 0; i < p1.size(); ++i) {
      const auto a = p1[i].second.value().f64();
      const auto b = p3[i].second.value().f64();
      for (std::size_t j = 0; j < a.size(); ++j)
        any_different = any_different || a[j] != b[j];
    }
    CHECK(any_different);
  }
}

TEST_CASE("the shipped NLI config produces normalised probabilities") {
  ArchDims dims{16, 8};
  auto graph = compile_arch(
      corpus::read_text_file(kConfigDir + "nli_baseline.yaml"), Task::kNli, dims);
  auto model = instantiate(graph);
  auto vocab = small_vocab(20);
  model->setup(vocab, 9);

  Rng rng(31);
  auto batch = testing::make_synthetic_batch(vocab.size(), 4, 5, 7, 6,
                                             /*qa_targets=*/false,
                                             /*training=*/false, rng);
  engine::Tape tape;
  auto out = model->forward(tape, batch, false);
  const engine::Tensor& logits = out.at("logits").value();
  REQUIRE(logits.shape() == engine::Shape{4, 3});
  for (int b = 0; b < 4; ++b) {
    double z = 0.0;
    for (int c = 0; c < 3; ++c) z += std::exp(logits.f64()[b * 3 + c]);
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += std::exp(logits.f64()[b * 3 + c]) / z;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

// Registry closure: every block type passes the end-to-end gradient check.
TEST_CASE("every registry block back-propagates correctly") {
  constexpr double kTol = 1e-6;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    CAPTURE(seed);
    CHECK(testing::worst_block_grad_error(seed) < kTol);
  }
}

TEST_CASE("compiled configs run forward on randomised sizes without shape errors") {
  Rng rng(555);
  auto vocab = small_vocab(30);
  for (const char* name : {"nli_baseline.yaml", "qa_span_baseline.yaml"}) {
    CAPTURE(name);
    const bool qa = std::string(name).find("qa") == 0;
    auto graph = compile_arch(corpus::read_text_file(kConfigDir + name),
                              qa ? Task::kQa : Task::kNli, {32, 16});
    auto model = instantiate(graph);
    model->setup(vocab, 77);
    for (int trial = 0; trial < 5; ++trial) {
      const std::int64_t b = 1 + rng.uniform_int(4);
      const std::int64_t q = 1 + rng.uniform_int(6);
      const std::int64_t s = 1 + rng.uniform_int(9);
      auto batch = testing::make_synthetic_batch(vocab.size(), b, q, s, 5, qa,
                                                 true, rng);
      engine::Tape tape;
      CHECK_NOTHROW(model->forward(tape, batch, true));
    }
  }
}
