// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>

#include "doctest.h"
#include "mrkit/metrics.hpp"
#include "mrkit/rng.hpp"

using namespace mrkit;
using namespace mrkit::metrics;

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

TEST_CASE("normalize_answer lowercases, strips punctuation and articles") {
  CHECK(normalize_answer("Levi's Stadium") == "levis stadium");
  CHECK(normalize_answer("The  Answer.") == "answer");
  CHECK(normalize_answer("") == "");
  CHECK(normalize_answer("A man, a plan!") == "man plan");
  CHECK(normalize_answer("an apple") == "apple");
  CHECK(normalize_answer("THE THE the") == "");
}

TEST_CASE("span_f1_em on the worked examples") {
  SUBCASE("perfect match against the gold list") {
    const std::vector<std::string> golds{
        " Santa Clara, California", "Levi's Stadium", "Levi's Stadium",
        " Levi's Stadium in the San Francisco Bay Area at Santa Clara, "
        "California."};
    F1Em result = span_f1_em("Levi's Stadium", golds);
    CHECK(result.em == 1.0);
    CHECK(result.f1 == 1.0);
  }
  SUBCASE("partial overlap: P = R = 2/3") {
    F1Em result = span_f1_em("in Santa Clara", {"Santa Clara, California"});
    CHECK(result.em == 0.0);
    CHECK(result.f1 == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  }
  SUBCASE("empty prediction scores zero") {
    F1Em result = span_f1_em("", {"anything", "else"});
    CHECK(result.f1 == 0.0);
    CHECK(result.em == 0.0);
  }
  SUBCASE("no golds is an error") {
    CHECK(kind_of([] { span_f1_em("x", {}); }) == ErrorKind::kEmptyGolds);
  }
}

TEST_CASE("f1/em invariants on fuzzed inputs") {
  Rng rng(2718);
  auto random_phrase = [&rng]() {
    static const std::vector<std::string> words{"the", "red",  "fox", "jumps",
                                                "Dog", "a",    "An",  "wall,",
                                                "9",   "quick"};
    std::string s;
    const auto n = 1 + rng.uniform_int(5);
    for (std::int64_t i = 0; i < n; ++i) {
      if (i) s.push_back(' ');
      s += words[static_cast<std::size_t>(rng.uniform_int(
          static_cast<std::int64_t>(words.size())))];
    }
    return s;
  };
  for (int trial = 0; trial < 300; ++trial) {
    const std::string pred = random_phrase();
    std::vector<std::string> golds;
    const auto n_golds = 1 + rng.uniform_int(3);
    for (std::int64_t i = 0; i < n_golds; ++i) golds.push_back(random_phrase());

    F1Em result = span_f1_em(pred, golds);
    CHECK(result.f1 >= 0.0);
    CHECK(result.f1 <= 1.0);
    if (result.em == 1.0) CHECK(result.f1 == 1.0);

    // gold-order invariance
    std::vector<std::string> shuffled = golds;
    rng.shuffle(shuffled);
    F1Em again = span_f1_em(pred, shuffled);
    CHECK(again.f1 == result.f1);
    CHECK(again.em == result.em);

    // f1 == 1 iff normalized token bags match
    F1Em self = span_f1_em(pred, {pred});
    CHECK(self.f1 == 1.0);
    CHECK(self.em == 1.0);
  }
}

TEST_CASE("ranking metrics on worked examples") {
  auto m = ranking_metrics({1, 4}, {3, 10});
  CHECK(m.at("mrr") == doctest::Approx(0.625).epsilon(1e-12));
  CHECK(m.at("hits@3") == 0.5);
  CHECK(m.at("hits@10") == 1.0);

  auto perfect = ranking_metrics({1, 1, 1}, {3, 10});
  CHECK(perfect.at("mrr") == 1.0);
  CHECK(perfect.at("hits@3") == 1.0);
  CHECK(perfect.at("hits@10") == 1.0);

  CHECK(kind_of([] { ranking_metrics({}, {3}); }) == ErrorKind::kEmptyResults);
  CHECK(kind_of([] { ranking_metrics({0}, {3}); }) == ErrorKind::kEmptyResults);
}

TEST_CASE("improving any single rank never decreases a metric") {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::int64_t> ranks;
    const auto n = 1 + rng.uniform_int(8);
    for (std::int64_t i = 0; i < n; ++i) ranks.push_back(1 + rng.uniform_int(20));
    auto base = ranking_metrics(ranks, {3, 10});
    const auto which = rng.uniform_int(n);
    if (ranks[static_cast<std::size_t>(which)] > 1) {
      std::vector<std::int64_t> improved = ranks;
      improved[static_cast<std::size_t>(which)] -=
          1 + rng.uniform_int(improved[static_cast<std::size_t>(which)] - 1);
      auto better = ranking_metrics(improved, {3, 10});
      CHECK(better.at("mrr") >= base.at("mrr"));
      CHECK(better.at("hits@3") >= base.at("hits@3"));
      CHECK(better.at("hits@10") >= base.at("hits@10"));
    }
  }
}

TEST_CASE("accuracy") {
  CHECK(accuracy({"a", "b"}, {"a", "b"}) == 1.0);
  CHECK(accuracy({"a", "b", "c", "d"}, {"a", "b", "c", "x"}) == 0.75);
  CHECK(accuracy({"a", "b"}, {"x", "y"}) == 0.0);
  CHECK(kind_of([] { accuracy({"a"}, {"a", "b"}); }) ==
        ErrorKind::kLengthMismatch);
  CHECK(kind_of([] { accuracy({}, {}); }) == ErrorKind::kEmptyResults);
}

TEST_CASE("report formatting is fixed to four decimals") {
  CHECK(format_report({"mrr", 0.625, 4}) == "mrr 0.6250 4");
  CHECK(format_report({"accuracy", 1.0, 500}) == "accuracy 1.0000 500");
  CHECK(format_report({"f1", 2.0 / 3.0, 1}) == "f1 0.6667 1");
}
