// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mrkit/autodiff.hpp"
#include "mrkit/corpus.hpp"
#include "mrkit/optimizer.hpp"
#include "mrkit/rng.hpp"

namespace mrkit::zoo {

enum class LpKind { kDistMult, kComplEx };

LpKind lp_kind_from_string(const std::string& name);
std::string lp_kind_name(LpKind kind);

// Bilinear-diagonal link-prediction scorer. ComplEx keeps real and imaginary
// halves in separate tables of the same width.
class EmbeddingModel {
 public:
  EmbeddingModel(LpKind kind, std::int64_t num_entities,
                 std::int64_t num_relations, std::int64_t dim,
                 std::uint64_t seed);

  LpKind kind() const { return kind_; }
  std::int64_t dim() const { return dim_; }
  std::int64_t num_entities() const { return num_entities_; }
  std::int64_t num_relations() const { return num_relations_; }

  // DistMult: sum_k e_s[k] w_p[k] e_o[k].
  // ComplEx:  sum_k Re(<e_s, w_p, conj(e_o)>), expanded over the halves.
  double score(std::int64_t s, std::int64_t p, std::int64_t o) const;

  // Differentiable batch scorer over id arrays (all i64, same length).
  engine::Var score_batch(engine::Tape& tape, const engine::Tensor& s_ids,
                          const engine::Tensor& p_ids,
                          const engine::Tensor& o_ids);

  std::vector<std::pair<std::string, engine::Var>> parameters();
  const std::vector<std::pair<std::string, engine::Var>>& parameters() const {
    return params_;
  }

 private:
  void check_entity(std::int64_t id) const;
  void check_relation(std::int64_t id) const;

  LpKind kind_;
  std::int64_t num_entities_;
  std::int64_t num_relations_;
  std::int64_t dim_;
  // distmult uses only the .re tables
  engine::Var ent_re_, ent_im_, rel_re_, rel_im_;
  std::vector<std::pair<std::string, engine::Var>> params_;
};

struct LpTrainConfig {
  LpKind kind = LpKind::kComplEx;
  std::int64_t dim = 16;
  std::int64_t negatives_per_positive = 1;
  int epochs = 1;
  std::uint64_t seed = 1;
  std::int64_t batch_size = 128;
  engine::AdamConfig adam;
  // fired after every optimizer step with the global batch index and loss
  std::function<void(std::int64_t, double)> on_batch;
};

struct LpTrainReport {
  std::vector<double> epoch_mean_loss;
  std::int64_t score_evaluations = 0;
};

// Pointwise logistic training, softplus(-y * score): facts are +1, sampled
// corruptions -1. Corruptions flip a coin between subject and object, draw
// uniformly over entities, and resample while the corruption is a known
// fact. Deterministic under the seed.
EmbeddingModel train_lp(const corpus::TripleStore& store,
                        const LpTrainConfig& config,
                        LpTrainReport* report = nullptr);

enum class OpenSlot { kSubject, kObject };

struct LpQuery {
  std::int64_t subject = 0;
  std::int64_t predicate = 0;
  std::int64_t object = 0;
  OpenSlot open_slot = OpenSlot::kObject;
};

struct RankingResult {
  std::int64_t rank = 1;
  bool filtered = false;
};

// Rank of the gold entity among all entities in the open slot: 1 + the
// number of candidates scoring strictly higher (optimistic tie-breaking).
// Filtered mode removes other entities that form known true triples.
RankingResult rank_entities(const EmbeddingModel& model,
                            const corpus::TripleStore& known,
                            const LpQuery& query, bool filtered);

// Adapter over metrics::ranking_metrics.
std::map<std::string, double> ranking_metrics(
    const std::vector<RankingResult>& results, const std::vector<int>& ks);

// Save-directory layout: config.yaml, vocab.txt (entities), relations.txt,
// triples.tsv (training facts), params.ckpt.
void save_lp(const std::string& dir, const EmbeddingModel& model,
             const corpus::TripleStore& store, std::uint64_t seed);

struct LpBundle {
  EmbeddingModel model;
  corpus::TripleStore store;
};

LpBundle load_lp(const std::string& dir);

}  // namespace mrkit::zoo
