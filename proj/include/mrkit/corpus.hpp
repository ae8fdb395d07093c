// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mrkit/error.hpp"

namespace mrkit::corpus {

// Half-open character span into one support document.
struct CharSpan {
  std::int64_t doc_index = 0;
  std::int64_t char_start = 0;
  std::int64_t char_end = 0;

  bool operator==(const CharSpan&) const = default;
};

struct Answer {
  std::string text;
  std::optional<CharSpan> span;

  bool operator==(const Answer&) const = default;
};

// One question with its evidence and (possibly empty) gold answers.
struct QASetting {
  std::string question;
  std::vector<std::string> support;
  std::optional<std::vector<std::string>> candidates;
  std::vector<Answer> answers;

  bool operator==(const QASetting&) const = default;
};

struct Dataset {
  std::vector<QASetting> instances;
  std::string meta;
  std::optional<std::vector<std::string>> global_candidates;

  bool operator==(const Dataset&) const = default;

  // Per-instance candidates if set, otherwise the globals (may be null).
  const std::vector<std::string>* effective_candidates(std::size_t i) const {
    if (instances[i].candidates.has_value()) return &*instances[i].candidates;
    if (global_candidates.has_value()) return &*global_candidates;
    return nullptr;
  }
};

// Canonical dataset JSON. The loader flattens to one QASetting per
// (instance, question); the serializer writes one instance per QASetting,
// so serialize(load(text)) is a fixed point on canonical files.
Dataset load_dataset_json(const std::string& text);
std::string serialize_dataset_json(const Dataset& dataset);

Dataset load_dataset_file(const std::string& path);
void save_dataset_file(const std::string& path, const Dataset& dataset);

struct ConvertStats {
  std::int64_t converted = 0;
  std::int64_t dropped = 0;
};

// SQuAD v1.1 articles/paragraphs/qas. Gold spans become half-open char
// spans (answer_start, answer_start + len); a qa whose answer text does not
// match the context substring is skipped and counted, never fatal.
Dataset convert_squad(const std::string& squad_json, ConvertStats* stats = nullptr);

// SNLI JSONL: hypothesis becomes the question, premise the single support,
// candidates the three labels. Lines labelled "-" are dropped and counted.
Dataset convert_snli(const std::string& jsonl, ConvertStats* stats = nullptr);

inline const std::vector<std::string>& nli_labels() {
  static const std::vector<std::string> kLabels{"entailment", "contradiction",
                                                "neutral"};
  return kLabels;
}

// Entity/relation-indexed fact set. Ids are dense and assigned in first
// appearance order, which makes conversion deterministic.
class TripleStore {
 public:
  using Triple = std::array<std::int64_t, 3>;  // (s_id, p_id, o_id)

  std::int64_t add_entity(const std::string& name);
  std::int64_t add_relation(const std::string& name);
  // Returns false if the triple was already present.
  bool add_triple(std::int64_t s, std::int64_t p, std::int64_t o);

  std::optional<std::int64_t> entity_id(const std::string& name) const;
  std::optional<std::int64_t> relation_id(const std::string& name) const;
  const std::string& entity_name(std::int64_t id) const;
  const std::string& relation_name(std::int64_t id) const;

  std::int64_t num_entities() const { return static_cast<std::int64_t>(entities_.size()); }
  std::int64_t num_relations() const { return static_cast<std::int64_t>(relations_.size()); }
  std::int64_t num_triples() const { return static_cast<std::int64_t>(triples_.size()); }

  bool contains(std::int64_t s, std::int64_t p, std::int64_t o) const;
  const std::set<std::int64_t>& objects_of(std::int64_t s, std::int64_t p) const;
  const std::set<std::int64_t>& subjects_of(std::int64_t p, std::int64_t o) const;
  const std::set<Triple>& triples() const { return triples_; }

  const std::vector<std::string>& entities() const { return entities_; }
  const std::vector<std::string>& relations() const { return relations_; }

 private:
  void check_ids(std::int64_t s, std::int64_t p, std::int64_t o) const;

  std::vector<std::string> entities_;
  std::vector<std::string> relations_;
  std::map<std::string, std::int64_t> entity_ids_;
  std::map<std::string, std::int64_t> relation_ids_;
  std::set<Triple> triples_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::set<std::int64_t>> sp_to_o_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::set<std::int64_t>> po_to_s_;
};

inline constexpr const char* kLpSeparator = " [SEP] ";
inline constexpr const char* kLpPlaceholder = "?";

struct TripleDataset {
  Dataset dataset;
  TripleStore store;
};

// TSV "subject<TAB>predicate<TAB>object", one fact per line. The dataset
// view encodes every distinct triple twice, once per open slot:
//   "s [SEP] p [SEP] ?" -> o   and   "? [SEP] p [SEP] o" -> s
// with all entities as global candidates.
TripleDataset convert_triples(const std::string& tsv);

// Maps a TSV onto the ids of an existing store (for held-out evaluation).
// Triples mentioning unknown entities or relations are skipped and counted.
std::vector<TripleStore::Triple> resolve_triples(const TripleStore& store,
                                                 const std::string& tsv,
                                                 ConvertStats* stats = nullptr);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

}  // namespace mrkit::corpus
