// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "mrkit/textpipe.hpp"

using namespace mrkit;
using namespace mrkit::textpipe;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const auto dir = std::filesystem::temp_directory_path() / "mrkit_textpipe";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream(path, std::ios::trunc) << content;
  return path;
}

}  // namespace

TEST_CASE("tokenize keeps exact offsets") {
  SUBCASE("plain whitespace split") {
    auto toks = tokenize("Children smiling and waving at camera");
    REQUIRE(toks.size() == 6);
    const std::vector<std::pair<std::int64_t, std::int64_t>> expected{
        {0, 8}, {9, 16}, {17, 20}, {21, 27}, {28, 30}, {31, 37}};
    for (std::size_t i = 0; i < toks.size(); ++i) {
      CHECK(toks[i].char_start == expected[i].first);
      CHECK(toks[i].char_end == expected[i].second);
    }
    CHECK(toks[0].text == "Children");
    CHECK(toks[5].text == "camera");
  }
  SUBCASE("internal apostrophe is retained") {
    auto toks = tokenize("Levi's Stadium");
    REQUIRE(toks.size() == 2);
    CHECK(toks[0].text == "Levi's");
    CHECK(toks[1].text == "Stadium");
  }
  SUBCASE("leading and trailing punctuation peels off iteratively") {
    auto toks = tokenize("(hello)， say \"hi!\").");
    std::vector<std::string> texts;
    for (const auto& t : toks) texts.push_back(t.text);
    // ， is multi-byte and not in the split set, so it stays attached
    CHECK(texts == std::vector<std::string>{"(", "hello)，", "say", "\"", "hi",
                                            "!", "\"", ")", "."});
  }
  SUBCASE("empty input") { CHECK(tokenize("").empty()); }
  SUBCASE("offsets always slice the source") {
    const std::string src = "  a, (b c)!  d's-e.  ";
    for (const auto& t : tokenize(src)) {
      CHECK(src.substr(static_cast<std::size_t>(t.char_start),
                       static_cast<std::size_t>(t.char_end - t.char_start)) ==
            t.text);
    }
  }
}

TEST_CASE("detokenization by offsets reconstructs fuzzed sources") {
  Rng rng(321);
  const std::string alphabet = "ab c.d,(e)!?'x\"y z[]:;tuv ";
  for (int trial = 0; trial < 200; ++trial) {
    std::string src;
    const auto len = rng.uniform_int(30);
    for (std::int64_t i = 0; i < len; ++i)
      src.push_back(alphabet[static_cast<std::size_t>(
          rng.uniform_int(static_cast<std::int64_t>(alphabet.size())))]);
    auto toks = tokenize(src);
    // non-overlapping, strictly increasing, and slices match
    std::int64_t prev_end = 0;
    std::string rebuilt;
    for (const auto& t : toks) {
      CHECK(t.char_start >= prev_end);
      // gap between tokens is whitespace only
      rebuilt += src.substr(static_cast<std::size_t>(prev_end),
                            static_cast<std::size_t>(t.char_start - prev_end));
      rebuilt += t.text;
      prev_end = t.char_end;
    }
    rebuilt += src.substr(static_cast<std::size_t>(prev_end));
    CHECK(rebuilt == src);
  }
}

TEST_CASE("char span to token span covers the gold range") {
  Rng rng(9);
  const std::string src = "The game, played at Levi's Stadium, was fun!";
  auto toks = tokenize(src);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = rng.uniform_int(static_cast<std::int64_t>(src.size()));
    const auto b =
        a + 1 + rng.uniform_int(static_cast<std::int64_t>(src.size()) - a);
    auto span = token_span_for_chars(toks, a, b);
    if (!span.has_value()) continue;  // whitespace-only range
    CHECK(toks[span->first].char_start <= b);
    // the covering token range maps back to chars containing the gold range
    // whenever the gold range starts/ends inside tokens
    const auto c0 = toks[span->first].char_start;
    const auto c1 = toks[span->second].char_end;
    const auto trimmed_a = [&] {
      auto x = a;
      while (x < b && std::isspace(static_cast<unsigned char>(src[static_cast<std::size_t>(x)]))) ++x;
      return x;
    }();
    const auto trimmed_b = [&] {
      auto x = b;
      while (x > a && std::isspace(static_cast<unsigned char>(src[static_cast<std::size_t>(x - 1)]))) --x;
      return x;
    }();
    CHECK(c0 <= trimmed_a);
    CHECK(c1 >= trimmed_b);
  }
}

TEST_CASE("build_vocab orders by frequency with first-appearance ties") {
  Vocab v = build_vocab({"a b a", "b c"}, 1);
  CHECK(v.size() == 5);
  CHECK(v.id("a") == 2);  // freq 2, seen before b? a first at pos 0
  CHECK(v.id("b") == 3);  // freq 2, first seen after a
  CHECK(v.id("c") == 4);  // freq 1
  CHECK(v.token(0) == Vocab::kPadToken);
  CHECK(v.token(1) == Vocab::kUnkToken);

  SUBCASE("min_count filters") {
    Vocab v2 = build_vocab({"a b a", "b c"}, 2);
    CHECK(v2.size() == 4);
    CHECK(v2.id("c") == Vocab::kUnk);
    CHECK(v2.id("a") == 2);
  }
  SUBCASE("empty corpus keeps only the reserved ids") {
    Vocab v3 = build_vocab({}, 1);
    CHECK(v3.size() == 2);
  }
  SUBCASE("frozen vocab never grows") {
    const auto before = v.size();
    CHECK(v.id("unseen-token") == Vocab::kUnk);
    CHECK(v.size() == before);
  }
  SUBCASE("vocab lines round trip") {
    Vocab v4 = Vocab::from_lines(v.to_lines());
    CHECK(v4.size() == v.size());
    CHECK(v4.id("c") == v.id("c"));
  }
}

namespace {

corpus::Dataset tiny_dataset(int n) {
  corpus::Dataset ds;
  ds.meta = "test";
  for (int i = 0; i < n; ++i) {
    corpus::QASetting qa;
    qa.question = "what is item " + std::to_string(i);
    qa.support = {std::string("item ") + std::to_string(i) + " is the answer " +
                  std::string(static_cast<std::size_t>(i % 3), 'x')};
    ds.instances.push_back(qa);
  }
  return ds;
}

}  // namespace

TEST_CASE("make_batches pads, masks, and partitions") {
  corpus::Dataset ds = tiny_dataset(5);
  std::vector<std::string> corpus_strings;
  for (const auto& inst : ds.instances) {
    corpus_strings.push_back(inst.question);
    corpus_strings.push_back(inst.support[0]);
  }
  Vocab vocab = build_vocab(corpus_strings, 1);

  SUBCASE("batch sizes 2,2,1") {
    auto batches = make_batches(ds, vocab, 2, std::nullopt);
    REQUIRE(batches.size() == 3);
    CHECK(batches[0].instance_indices.size() == 2);
    CHECK(batches[1].instance_indices.size() == 2);
    CHECK(batches[2].instance_indices.size() == 1);
  }
  SUBCASE("padding and masks") {
    // supports have token lengths 5 (i=0) and 6 (i=1,2 with the x suffix)
    corpus::Dataset two;
    two.meta = "t";
    corpus::QASetting a;
    a.question = "q one";
    a.support = {"one two three"};
    corpus::QASetting b;
    b.question = "q two";
    b.support = {"one two three four five six seven"};
    two.instances = {a, b};
    Vocab v2 = build_vocab({"one two three four five six seven q"}, 1);
    auto batches = make_batches(two, v2, 2, std::nullopt);
    REQUIRE(batches.size() == 1);
    const auto& support = batches[0].at("support");
    CHECK(support.shape() == engine::Shape{2, 7});
    const auto& mask = batches[0].at("support_mask");
    int zeros_row0 = 0;
    for (int j = 0; j < 7; ++j) zeros_row0 += mask.f64()[j] == 0.0 ? 1 : 0;
    CHECK(zeros_row0 == 4);
    const auto& lengths = batches[0].at("support_length");
    CHECK(lengths.i64()[0] == 3);
    CHECK(lengths.i64()[1] == 7);
    // padded cells hold the PAD id
    CHECK(support.i64()[6] == Vocab::kPad);
  }
  SUBCASE("same seed gives identical batch sequences") {
    auto b1 = make_batches(ds, vocab, 2, 77);
    auto b2 = make_batches(ds, vocab, 2, 77);
    REQUIRE(b1.size() == b2.size());
    for (std::size_t i = 0; i < b1.size(); ++i) {
      CHECK(b1[i].instance_indices == b2[i].instance_indices);
      CHECK(b1[i].at("question").i64().size() ==
            b2[i].at("question").i64().size());
      for (std::size_t j = 0; j < b1[i].at("question").i64().size(); ++j)
        CHECK(b1[i].at("question").i64()[j] == b2[i].at("question").i64()[j]);
    }
  }
  SUBCASE("the multiset of instances across batches is the dataset") {
    auto batches = make_batches(ds, vocab, 2, 123);
    std::map<std::size_t, int> seen;
    for (const auto& b : batches)
      for (auto idx : b.instance_indices) ++seen[idx];
    CHECK(seen.size() == 5);
    for (const auto& [idx, count] : seen) CHECK(count == 1);
  }
  SUBCASE("empty dataset is an error") {
    corpus::Dataset empty;
    try {
      make_batches(empty, vocab, 2, std::nullopt);
      FAIL("expected EmptyDataset");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kEmptyDataset);
    }
  }
}

TEST_CASE("load_embeddings copies rows and reports coverage") {
  Vocab vocab = build_vocab({"a"}, 1);  // rows: PAD, UNK, a
  SUBCASE("single covered word") {
    const auto path = write_temp("emb1.txt", "a 1.0 2.0\n");
    EmbeddingTable table = load_embeddings(path, vocab, 4, 9);
    CHECK(table.dim == 2);
    CHECK(table.table.shape() == engine::Shape{3, 2});
    CHECK(table.table.f64()[2 * 2 + 0] == 1.0);
    CHECK(table.table.f64()[2 * 2 + 1] == 2.0);
    CHECK(table.coverage == doctest::Approx(1.0 / 3.0));
    // uncovered rows are in the init range
    for (int j = 0; j < 4; ++j) {
      CHECK(std::abs(table.table.f64()[j]) <= 0.05);
    }
  }
  SUBCASE("empty file falls back to random init") {
    const auto path = write_temp("emb2.txt", "");
    EmbeddingTable table = load_embeddings(path, vocab, 4, 9);
    CHECK(table.dim == 4);
    CHECK(table.coverage == 0.0);
    EmbeddingTable again = load_embeddings(path, vocab, 4, 9);
    for (std::size_t i = 0; i < table.table.f64().size(); ++i)
      CHECK(table.table.f64()[i] == again.table.f64()[i]);
  }
  SUBCASE("dimension mismatch reports the line") {
    const auto path = write_temp("emb3.txt", "a 1.0 2.0\nb 1.0\n");
    try {
      load_embeddings(path, vocab, 4, 9);
      FAIL("expected DimensionMismatch");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kDimensionMismatch);
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("word with no values is malformed") {
    const auto path = write_temp("emb4.txt", "loneword\n");
    try {
      load_embeddings(path, vocab, 4, 9);
      FAIL("expected MalformedLine");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::kMalformedLine);
    }
  }
}
