// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mrkit/error.hpp"

namespace mrkit::metrics {

struct MetricReport {
  std::string name;
  double value = 0.0;  // always a mean of per-item scores in [0, 1]
  std::int64_t count = 0;
};

// "name value count" with the value to 4 decimals.
std::string format_report(const MetricReport& report);

// Lowercase, strip punctuation, drop standalone articles (a/an/the),
// collapse whitespace. The de-facto normalisation that makes token-F1
// comparable across extractive QA systems.
std::string normalize_answer(const std::string& text);

struct F1Em {
  double f1 = 0.0;
  double em = 0.0;
};

// Token-bag F1 and exact match on normalised strings; each metric takes its
// max over the golds independently. Throws EmptyGolds.
F1Em span_f1_em(const std::string& prediction,
                const std::vector<std::string>& golds);

// mrr plus hits@k for every requested k, e.g. {"mrr", "hits@3", "hits@10"}.
// Ranks are 1-based. Throws EmptyResults.
std::map<std::string, double> ranking_metrics(
    const std::vector<std::int64_t>& ranks, const std::vector<int>& ks);

// Fraction of exact matches. Throws LengthMismatch / EmptyResults.
double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds);

}  // namespace mrkit::metrics
