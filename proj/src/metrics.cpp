// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>

namespace mrkit::metrics {

std::string format_report(const MetricReport& report) {
  char value[32];
  std::snprintf(value, sizeof(value), "%.4f", report.value);
  return report.name + " " + value + " " + std::to_string(report.count);
}

std::string normalize_answer(const std::string& text) {
  std::string cleaned;
  cleaned.reserve(text.size());
  for (char c : text) {
    const auto uc = static_cast<unsigned char>(c);
    if (std::ispunct(uc)) continue;
    cleaned.push_back(static_cast<char>(std::tolower(uc)));
  }
  std::istringstream in(cleaned);
  std::string word;
  std::string out;
  while (in >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out.push_back(' ');
    out += word;
  }
  return out;
}

namespace {

std::vector<std::string> normalized_tokens(const std::string& text) {
  std::istringstream in(normalize_answer(text));
  std::vector<std::string> tokens;
  std::string word;
  while (in >> word) tokens.push_back(word);
  return tokens;
}

double bag_f1(const std::vector<std::string>& pred,
              const std::vector<std::string>& gold) {
  if (pred.empty() && gold.empty()) return 1.0;
  if (pred.empty() || gold.empty()) return 0.0;
  std::map<std::string, std::int64_t> counts;
  for (const auto& t : gold) ++counts[t];
  std::int64_t overlap = 0;
  for (const auto& t : pred) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++overlap;
    }
  }
  if (overlap == 0) return 0.0;
  const double precision = static_cast<double>(overlap) / static_cast<double>(pred.size());
  const double recall = static_cast<double>(overlap) / static_cast<double>(gold.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

F1Em span_f1_em(const std::string& prediction,
                const std::vector<std::string>& golds) {
  if (golds.empty()) {
    throw Error(ErrorKind::kEmptyGolds, "span_f1_em needs at least one gold");
  }
  const std::string norm_pred = normalize_answer(prediction);
  const auto pred_tokens = normalized_tokens(prediction);
  F1Em best;
  for (const std::string& gold : golds) {
    best.em = std::max(best.em, normalize_answer(gold) == norm_pred ? 1.0 : 0.0);
    best.f1 = std::max(best.f1, bag_f1(pred_tokens, normalized_tokens(gold)));
  }
  return best;
}

std::map<std::string, double> ranking_metrics(
    const std::vector<std::int64_t>& ranks, const std::vector<int>& ks) {
  if (ranks.empty()) {
    throw Error(ErrorKind::kEmptyResults, "ranking_metrics needs results");
  }
  std::map<std::string, double> out;
  double reciprocal_sum = 0.0;
  for (std::int64_t r : ranks) {
    if (r < 1) {
      throw Error(ErrorKind::kEmptyResults,
                  "ranks are 1-based, got " + std::to_string(r));
    }
    reciprocal_sum += 1.0 / static_cast<double>(r);
  }
  out["mrr"] = reciprocal_sum / static_cast<double>(ranks.size());
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                    [k](std::int64_t r) { return r <= k; });
    out["hits@" + std::to_string(k)] =
        static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return out;
}

double accuracy(const std::vector<std::string>& predictions,
                const std::vector<std::string>& golds) {
  if (predictions.size() != golds.size()) {
    throw Error(ErrorKind::kLengthMismatch,
                std::to_string(predictions.size()) + " predictions vs " +
                    std::to_string(golds.size()) + " golds");
  }
  if (predictions.empty()) {
    throw Error(ErrorKind::kEmptyResults, "accuracy needs at least one item");
  }
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] == golds[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

}  // namespace mrkit::metrics
