// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mrkit/corpus.hpp"
#include "mrkit/rng.hpp"
#include "mrkit/tensor.hpp"

namespace mrkit::textpipe {

// Token with half-open byte offsets into its source string.
struct Token {
  std::string text;
  std::int64_t char_start = 0;
  std::int64_t char_end = 0;

  bool operator==(const Token&) const = default;
};

// Whitespace split, then leading/trailing characters from .,;:!?"()[]' are
// peeled into single-character tokens. Internal apostrophes and hyphens
// survive, which keeps offsets exact for span extraction.
std::vector<Token> tokenize(std::string_view text);

// Minimal token range [first, last] covering [char_start, char_end), or
// nullopt when the range touches no token.
std::optional<std::pair<std::size_t, std::size_t>> token_span_for_chars(
    const std::vector<Token>& tokens, std::int64_t char_start,
    std::int64_t char_end);

class Vocab {
 public:
  static constexpr std::int64_t kPad = 0;
  static constexpr std::int64_t kUnk = 1;
  static constexpr const char* kPadToken = "<PAD>";
  static constexpr const char* kUnkToken = "<UNK>";

  Vocab();

  // Counting phase; only legal before freeze().
  void observe(std::string_view token);
  // Assigns ids by descending frequency (ties by first appearance) to tokens
  // with count >= min_count, then freezes the map for good.
  void freeze(std::int64_t min_count);
  bool frozen() const { return frozen_; }

  // Frozen lookup: unknown tokens map to kUnk and never grow the vocab.
  std::int64_t id(std::string_view token) const;
  const std::string& token(std::int64_t id) const;
  std::int64_t size() const { return static_cast<std::int64_t>(id_to_token_.size()); }

  // One token per line in id order (save-file format).
  std::vector<std::string> to_lines() const { return id_to_token_; }
  static Vocab from_lines(const std::vector<std::string>& lines);

 private:
  bool frozen_ = false;
  std::vector<std::string> id_to_token_;
  std::map<std::string, std::int64_t, std::less<>> token_to_id_;
  // counting state (discarded at freeze)
  std::map<std::string, std::int64_t, std::less<>> counts_;
  std::vector<std::string> first_seen_;
};

// Tokenizes every string and freezes at min_count.
Vocab build_vocab(const std::vector<std::string>& corpus, std::int64_t min_count);

// Character ids for the char ports: 0 is padding, byte b maps to b + 1.
inline constexpr std::int64_t kCharVocabSize = 257;

struct Batch {
  std::map<std::string, engine::Tensor> tensors;
  std::vector<std::size_t> instance_indices;

  bool has(const std::string& port) const { return tensors.contains(port); }
  const engine::Tensor& at(const std::string& port) const;
  void put(const std::string& port, engine::Tensor t) { tensors[port] = std::move(t); }
};

// Text ports shared by the QA-style tasks. Question and first support doc
// are tokenized, padded to the batch max, and emitted with f64 0/1 masks and
// i64 lengths; char ports carry byte ids padded over a third axis.
//
// With a seed the instance order is a deterministic permutation; the final
// short batch is kept. Throws EmptyDataset on an empty dataset.
std::vector<Batch> make_batches(const corpus::Dataset& dataset, const Vocab& vocab,
                                std::int64_t batch_size,
                                std::optional<std::uint64_t> shuffle_seed);

struct EmbeddingTable {
  engine::Tensor table;  // [vocab_size, dim]
  double coverage = 0.0; // fraction of vocab rows found in the file
  std::int64_t dim = 0;
};

// GloVe-style text format: "word v1 ... vd" per line. Rows for in-vocab
// words are copied; everything else (including PAD/UNK) is initialised
// uniform(-0.05, 0.05) from the given seed.
EmbeddingTable load_embeddings(const std::string& path, const Vocab& vocab,
                               std::int64_t fallback_dim, std::uint64_t seed);

// The no-pretrained-file path: every row uniform(-0.05, 0.05).
engine::Tensor random_embeddings(std::int64_t rows, std::int64_t dim,
                                 std::uint64_t seed);

}  // namespace mrkit::textpipe
