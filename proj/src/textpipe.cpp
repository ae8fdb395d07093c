// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/textpipe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <numeric>
#include <sstream>

namespace mrkit::textpipe {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

bool is_splittable_punct(char c) {
  static constexpr std::string_view kPunct = ".,;:!?\"()[]'";
  return kPunct.find(c) != std::string_view::npos;
}

}  // namespace

std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;

    std::size_t lo = i, hi = j;
    while (lo < hi && is_splittable_punct(text[lo])) {
      tokens.push_back({std::string(text.substr(lo, 1)),
                        static_cast<std::int64_t>(lo),
                        static_cast<std::int64_t>(lo + 1)});
      ++lo;
    }
    std::size_t trail_begin = hi;
    while (trail_begin > lo && is_splittable_punct(text[trail_begin - 1])) {
      --trail_begin;
    }
    if (lo < trail_begin) {
      tokens.push_back({std::string(text.substr(lo, trail_begin - lo)),
                        static_cast<std::int64_t>(lo),
                        static_cast<std::int64_t>(trail_begin)});
    }
    for (std::size_t k = trail_begin; k < hi; ++k) {
      tokens.push_back({std::string(text.substr(k, 1)),
                        static_cast<std::int64_t>(k),
                        static_cast<std::int64_t>(k + 1)});
    }
    i = j;
  }
  return tokens;
}

std::optional<std::pair<std::size_t, std::size_t>> token_span_for_chars(
    const std::vector<Token>& tokens, std::int64_t char_start,
    std::int64_t char_end) {
  std::optional<std::size_t> first, last;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    // overlap of [char_start, char_end) with the token's span
    if (tokens[t].char_end > char_start && tokens[t].char_start < char_end) {
      if (!first.has_value()) first = t;
      last = t;
    }
  }
  if (!first.has_value()) return std::nullopt;
  return std::make_pair(*first, *last);
}

Vocab::Vocab() {
  id_to_token_ = {kPadToken, kUnkToken};
  token_to_id_ = {{kPadToken, kPad}, {kUnkToken, kUnk}};
}

void Vocab::observe(std::string_view token) {
  if (frozen_) {
    throw std::logic_error("Vocab::observe called after freeze");
  }
  auto it = counts_.find(token);
  if (it == counts_.end()) {
    counts_.emplace(std::string(token), 1);
    first_seen_.emplace_back(token);
  } else {
    ++it->second;
  }
}

void Vocab::freeze(std::int64_t min_count) {
  if (frozen_) return;
  frozen_ = true;
  // stable sort by descending count keeps first-appearance order for ties
  std::vector<std::pair<std::string, std::int64_t>> entries;
  entries.reserve(first_seen_.size());
  for (const std::string& tok : first_seen_) {
    const std::int64_t c = counts_.at(tok);
    if (c >= min_count) entries.emplace_back(tok, c);
  }
  std::stable_sort(entries.begin(), entries.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  for (auto& [tok, c] : entries) {
    token_to_id_.emplace(tok, size());
    id_to_token_.push_back(tok);
  }
  counts_.clear();
  first_seen_.clear();
}

std::int64_t Vocab::id(std::string_view token) const {
  if (!frozen_) {
    throw std::logic_error("Vocab::id called before freeze");
  }
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::int64_t id) const {
  if (id < 0 || id >= size()) {
    throw Error(ErrorKind::kIdOutOfRange, "vocab id " + std::to_string(id) +
                                              " of " + std::to_string(size()));
  }
  return id_to_token_[static_cast<std::size_t>(id)];
}

Vocab Vocab::from_lines(const std::vector<std::string>& lines) {
  Vocab v;
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "vocab file must start with the reserved PAD and UNK tokens");
  }
  v.frozen_ = true;
  for (std::size_t i = 2; i < lines.size(); ++i) {
    if (v.token_to_id_.contains(lines[i])) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  "vocab file repeats token \"" + lines[i] + "\"");
    }
    v.token_to_id_.emplace(lines[i], v.size());
    v.id_to_token_.push_back(lines[i]);
  }
  return v;
}

Vocab build_vocab(const std::vector<std::string>& corpus, std::int64_t min_count) {
  Vocab v;
  for (const std::string& text : corpus) {
    for (const Token& tok : tokenize(text)) v.observe(tok.text);
  }
  v.freeze(min_count);
  return v;
}

const engine::Tensor& Batch::at(const std::string& port) const {
  auto it = tensors.find(port);
  if (it == tensors.end()) {
    throw Error(ErrorKind::kPortMismatch, "batch has no tensor for port \"" +
                                              port + "\"");
  }
  return it->second;
}

namespace {

struct TokenizedInstance {
  std::vector<std::int64_t> question_ids;
  std::vector<std::int64_t> support_ids;
  std::vector<std::string> question_tokens;
  std::vector<std::string> support_tokens;
};

void emit_sequence_ports(Batch& batch, const std::string& prefix,
                         const std::vector<std::vector<std::int64_t>>& rows,
                         const std::vector<std::vector<std::string>>& texts) {
  const std::int64_t b = static_cast<std::int64_t>(rows.size());
  std::int64_t max_len = 0;
  for (const auto& r : rows)
    max_len = std::max(max_len, static_cast<std::int64_t>(r.size()));

  engine::Tensor ids = engine::Tensor::zeros({b, max_len}, engine::DType::kI64);
  engine::Tensor mask = engine::Tensor::zeros({b, max_len});
  engine::Tensor lengths = engine::Tensor::zeros({b}, engine::DType::kI64);
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& row = rows[static_cast<std::size_t>(i)];
    lengths.i64()[i] = static_cast<std::int64_t>(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) {
      ids.i64()[i * max_len + static_cast<std::int64_t>(j)] = row[j];
      mask.f64()[i * max_len + static_cast<std::int64_t>(j)] = 1.0;
    }
  }
  batch.put(prefix, std::move(ids));
  batch.put(prefix + "_mask", std::move(mask));
  batch.put(prefix + "_length", std::move(lengths));

  // byte-id char port [b, max_len, max_chars]
  std::int64_t max_chars = 1;
  for (const auto& row : texts)
    for (const auto& tok : row)
      max_chars = std::max(max_chars, static_cast<std::int64_t>(tok.size()));
  engine::Tensor chars =
      engine::Tensor::zeros({b, max_len, max_chars}, engine::DType::kI64);
  for (std::int64_t i = 0; i < b; ++i) {
    const auto& row = texts[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < row.size(); ++j) {
      for (std::size_t k = 0; k < row[j].size(); ++k) {
        chars.i64()[(i * max_len + static_cast<std::int64_t>(j)) * max_chars +
                    static_cast<std::int64_t>(k)] =
            static_cast<std::int64_t>(static_cast<unsigned char>(row[j][k])) + 1;
      }
    }
  }
  batch.put("char_" + prefix, std::move(chars));
}

}  // namespace

std::vector<Batch> make_batches(const corpus::Dataset& dataset, const Vocab& vocab,
                                std::int64_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed) {
  if (dataset.instances.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "cannot batch an empty dataset");
  }
  if (!vocab.frozen()) {
    throw std::logic_error("make_batches needs a frozen vocab");
  }
  if (batch_size < 1) {
    throw Error(ErrorKind::kEmptyDataset,
                "batch size must be >= 1, got " + std::to_string(batch_size));
  }

  std::vector<std::size_t> order(dataset.instances.size());
  std::iota(order.begin(), order.end(), 0);
  if (shuffle_seed.has_value()) {
    Rng rng(*shuffle_seed);
    rng.shuffle(order);
  }

  std::vector<Batch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += static_cast<std::size_t>(batch_size)) {
    const std::size_t end =
        std::min(order.size(), begin + static_cast<std::size_t>(batch_size));
    Batch batch;
    std::vector<std::vector<std::int64_t>> q_rows, s_rows;
    std::vector<std::vector<std::string>> q_texts, s_texts;
    for (std::size_t k = begin; k < end; ++k) {
      const corpus::QASetting& inst = dataset.instances[order[k]];
      batch.instance_indices.push_back(order[k]);
      std::vector<std::int64_t> q_ids, s_ids;
      std::vector<std::string> q_toks, s_toks;
      for (const Token& t : tokenize(inst.question)) {
        q_ids.push_back(vocab.id(t.text));
        q_toks.push_back(t.text);
      }
      if (!inst.support.empty()) {
        for (const Token& t : tokenize(inst.support[0])) {
          s_ids.push_back(vocab.id(t.text));
          s_toks.push_back(t.text);
        }
      }
      q_rows.push_back(std::move(q_ids));
      s_rows.push_back(std::move(s_ids));
      q_texts.push_back(std::move(q_toks));
      s_texts.push_back(std::move(s_toks));
    }
    emit_sequence_ports(batch, "question", q_rows, q_texts);
    emit_sequence_ports(batch, "support", s_rows, s_texts);
    batches.push_back(std::move(batch));
  }
  return batches;
}

EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab,
                               std::int64_t fallback_dim, std::uint64_t seed) {
  const std::string text = corpus::read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::int64_t line_no = 0;
  std::int64_t dim = -1;

  std::vector<std::pair<std::int64_t, std::vector<double>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word.empty()) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) + ": missing word");
    }
    std::vector<double> values;
    double v;
    while (ls >> v) values.push_back(v);
    if (!ls.eof()) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) + ": non-numeric value");
    }
    if (values.empty()) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) + ": no vector values");
    }
    if (dim < 0) {
      dim = static_cast<std::int64_t>(values.size());
    } else if (dim != static_cast<std::int64_t>(values.size())) {
      throw Error(ErrorKind::kDimensionMismatch,
                  "line " + std::to_string(line_no) + ": dimension " +
                      std::to_string(values.size()) + ", expected " +
                      std::to_string(dim));
    }
    const std::int64_t id = vocab.id(word);
    if (id != Vocab::kUnk || word == Vocab::kUnkToken) {
      rows.emplace_back(id, std::move(values));
    }
  }

  EmbeddingTable result;
  result.dim = dim < 0 ? fallback_dim : dim;
  result.table = random_embeddings(vocab.size(), result.dim, seed);
  std::vector<bool> covered(static_cast<std::size_t>(vocab.size()), false);
  for (const auto& [id, values] : rows) {
    std::copy(values.begin(), values.end(),
              result.table.f64().begin() + id * result.dim);
    covered[static_cast<std::size_t>(id)] = true;
  }
  const auto hits = std::count(covered.begin(), covered.end(), true);
  result.coverage = vocab.size() == 0
                        ? 0.0
                        : static_cast<double>(hits) / static_cast<double>(vocab.size());
  return result;
}

engine::Tensor random_embeddings(std::int64_t rows, std::int64_t dim,
                                 std::uint64_t seed) {
  Rng rng(seed);
  engine::Tensor t = engine::Tensor::zeros({rows, dim});
  for (double& v : t.f64()) v = rng.uniform(-0.05, 0.05);
  return t;
}

}  // namespace mrkit::textpipe
