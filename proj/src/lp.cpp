// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/lp.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "mrkit/checkpoint.hpp"
#include "mrkit/metrics.hpp"
#include "mrkit/ops.hpp"

namespace mrkit::zoo {

namespace fs = std::filesystem;
using engine::Tape;
using engine::Tensor;
using engine::Var;

LpKind lp_kind_from_string(const std::string& name) {
  if (name == "distmult") return LpKind::kDistMult;
  if (name == "complex") return LpKind::kComplEx;
  throw Error(ErrorKind::kParseError, "unknown embedding model \"" + name +
                                          "\"; expected distmult or complex");
}

std::string lp_kind_name(LpKind kind) {
  return kind == LpKind::kDistMult ? "distmult" : "complex";
}

namespace {

Tensor uniform_table(std::int64_t rows, std::int64_t cols, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  for (double& v : t.f64()) v = rng.uniform(-0.1, 0.1);
  return t;
}

}  // namespace

EmbeddingModel::EmbeddingModel(LpKind kind, std::int64_t num_entities,
                               std::int64_t num_relations, std::int64_t dim,
                               std::uint64_t seed)
    : kind_(kind),
      num_entities_(num_entities),
      num_relations_(num_relations),
      dim_(dim) {
  Rng rng(derive_seed(seed, "lp-tables"));
  ent_re_ = Var(uniform_table(num_entities, dim, rng), true);
  rel_re_ = Var(uniform_table(num_relations, dim, rng), true);
  params_.emplace_back("entity.re", ent_re_);
  params_.emplace_back("relation.re", rel_re_);
  if (kind_ == LpKind::kComplEx) {
    ent_im_ = Var(uniform_table(num_entities, dim, rng), true);
    rel_im_ = Var(uniform_table(num_relations, dim, rng), true);
    params_.emplace_back("entity.im", ent_im_);
    params_.emplace_back("relation.im", rel_im_);
  }
}

void EmbeddingModel::check_entity(std::int64_t id) const {
  if (id < 0 || id >= num_entities_) {
    throw Error(ErrorKind::kIdOutOfRange,
                "entity id " + std::to_string(id) + " outside [0, " +
                    std::to_string(num_entities_) + ")");
  }
}

void EmbeddingModel::check_relation(std::int64_t id) const {
  if (id < 0 || id >= num_relations_) {
    throw Error(ErrorKind::kIdOutOfRange,
                "relation id " + std::to_string(id) + " outside [0, " +
                    std::to_string(num_relations_) + ")");
  }
}

double EmbeddingModel::score(std::int64_t s, std::int64_t p, std::int64_t o) const {
  check_entity(s);
  check_entity(o);
  check_relation(p);
  const double* es = ent_re_.value().f64().data() + s * dim_;
  const double* eo = ent_re_.value().f64().data() + o * dim_;
  const double* wp = rel_re_.value().f64().data() + p * dim_;
  double total = 0.0;
  if (kind_ == LpKind::kDistMult) {
    // (e_s * e_o) * w_p: the grouping is symmetric in s and o, so the
    // symmetry score(s,p,o) == score(o,p,s) holds bit-exactly
    for (std::int64_t k = 0; k < dim_; ++k) total += (es[k] * eo[k]) * wp[k];
    return total;
  }
  const double* es_im = ent_im_.value().f64().data() + s * dim_;
  const double* eo_im = ent_im_.value().f64().data() + o * dim_;
  const double* wp_im = rel_im_.value().f64().data() + p * dim_;
  for (std::int64_t k = 0; k < dim_; ++k) {
    total += es[k] * wp[k] * eo[k];
    total += es_im[k] * wp[k] * eo_im[k];
    total += es[k] * wp_im[k] * eo_im[k];
    total -= es_im[k] * wp_im[k] * eo[k];
  }
  return total;
}

engine::Var EmbeddingModel::score_batch(Tape& tape, const Tensor& s_ids,
                                        const Tensor& p_ids,
                                        const Tensor& o_ids) {
  auto triple_product = [&](const Var& a_table, const Var& b_table,
                            const Var& c_table) {
    Var a = engine::lookup(tape, a_table, s_ids);
    Var b = engine::lookup(tape, b_table, p_ids);
    Var c = engine::lookup(tape, c_table, o_ids);
    return engine::reduce_sum(tape, engine::mul(tape, engine::mul(tape, a, b), c),
                              1);
  };
  if (kind_ == LpKind::kDistMult) {
    return triple_product(ent_re_, rel_re_, ent_re_);
  }
  Var rrr = triple_product(ent_re_, rel_re_, ent_re_);
  // s_im * w_re * o_im
  Var iri = [&] {
    Var a = engine::lookup(tape, ent_im_, s_ids);
    Var b = engine::lookup(tape, rel_re_, p_ids);
    Var c = engine::lookup(tape, ent_im_, o_ids);
    return engine::reduce_sum(tape, engine::mul(tape, engine::mul(tape, a, b), c), 1);
  }();
  // s_re * w_im * o_im
  Var rii = [&] {
    Var a = engine::lookup(tape, ent_re_, s_ids);
    Var b = engine::lookup(tape, rel_im_, p_ids);
    Var c = engine::lookup(tape, ent_im_, o_ids);
    return engine::reduce_sum(tape, engine::mul(tape, engine::mul(tape, a, b), c), 1);
  }();
  // s_im * w_im * o_re
  Var iir = [&] {
    Var a = engine::lookup(tape, ent_im_, s_ids);
    Var b = engine::lookup(tape, rel_im_, p_ids);
    Var c = engine::lookup(tape, ent_re_, o_ids);
    return engine::reduce_sum(tape, engine::mul(tape, engine::mul(tape, a, b), c), 1);
  }();
  return engine::sub(tape, engine::add(tape, engine::add(tape, rrr, iri), rii),
                     iir);
}

std::vector<std::pair<std::string, engine::Var>> EmbeddingModel::parameters() {
  return params_;
}

EmbeddingModel train_lp(const corpus::TripleStore& store,
                        const LpTrainConfig& config, LpTrainReport* report) {
  if (store.num_triples() == 0) {
    throw Error(ErrorKind::kEmptyDataset, "link prediction needs facts");
  }
  if (config.negatives_per_positive < 1) {
    throw Error(ErrorKind::kEmptyDataset, "negatives_per_positive must be >= 1");
  }
  EmbeddingModel model(config.kind, store.num_entities(), store.num_relations(),
                       config.dim, config.seed);

  std::vector<corpus::TripleStore::Triple> triples(store.triples().begin(),
                                                   store.triples().end());
  Rng rng(derive_seed(config.seed, "lp-train"));
  engine::AdamOptimizer optimizer(config.adam);
  auto named = model.parameters();
  std::vector<Var> params;
  for (auto& [name, var] : named) params.push_back(var);

  std::int64_t global_batch = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(triples);
    double epoch_loss = 0.0;
    std::int64_t batches = 0;
    for (std::size_t begin = 0; begin < triples.size();
         begin += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(
          triples.size(), begin + static_cast<std::size_t>(config.batch_size));
      std::vector<std::int64_t> s_ids, p_ids, o_ids;
      std::vector<double> labels;
      for (std::size_t i = begin; i < end; ++i) {
        const auto [s, p, o] = triples[i];
        s_ids.push_back(s);
        p_ids.push_back(p);
        o_ids.push_back(o);
        labels.push_back(1.0);
        for (std::int64_t j = 0; j < config.negatives_per_positive; ++j) {
          std::int64_t cs = s, co = o;
          for (int tries = 0; tries < 100; ++tries) {
            cs = s;
            co = o;
            if (rng.uniform_int(2) == 0) {
              cs = rng.uniform_int(store.num_entities());
            } else {
              co = rng.uniform_int(store.num_entities());
            }
            if (!store.contains(cs, p, co)) break;
          }
          s_ids.push_back(cs);
          p_ids.push_back(p);
          o_ids.push_back(co);
          labels.push_back(-1.0);
        }
      }
      const std::int64_t n = static_cast<std::int64_t>(labels.size());
      Tape tape;
      Var scores = model.score_batch(
          tape, Tensor::from_i64({n}, std::move(s_ids)),
          Tensor::from_i64({n}, std::move(p_ids)),
          Tensor::from_i64({n}, std::move(o_ids)));
      Var loss = engine::reduce_mean(
          tape, engine::binary_logistic_loss(tape, scores,
                                             Tensor::from_f64({n}, std::move(labels))));
      const double loss_value = loss.value().scalar_value();
      tape.backward(loss);
      optimizer.step(params);
      for (auto& p : params) p.zero_grad();

      if (report) report->score_evaluations += n;
      epoch_loss += loss_value;
      ++batches;
      ++global_batch;
      if (config.on_batch) config.on_batch(global_batch, loss_value);
    }
    if (report) {
      report->epoch_mean_loss.push_back(epoch_loss / static_cast<double>(batches));
    }
  }
  return model;
}

RankingResult rank_entities(const EmbeddingModel& model,
                            const corpus::TripleStore& known,
                            const LpQuery& query, bool filtered) {
  const bool object_open = query.open_slot == OpenSlot::kObject;
  const std::int64_t gold = object_open ? query.object : query.subject;
  const double gold_score =
      model.score(query.subject, query.predicate, query.object);

  RankingResult result;
  result.filtered = filtered;
  for (std::int64_t e = 0; e < model.num_entities(); ++e) {
    if (e == gold) continue;
    if (filtered) {
      const bool known_true = object_open
                                  ? known.contains(query.subject, query.predicate, e)
                                  : known.contains(e, query.predicate, query.object);
      if (known_true) continue;
    }
    const double candidate_score =
        object_open ? model.score(query.subject, query.predicate, e)
                    : model.score(e, query.predicate, query.object);
    if (candidate_score > gold_score) ++result.rank;
  }
  return result;
}

std::map<std::string, double> ranking_metrics(
    const std::vector<RankingResult>& results, const std::vector<int>& ks) {
  std::vector<std::int64_t> ranks;
  ranks.reserve(results.size());
  for (const RankingResult& r : results) ranks.push_back(r.rank);
  return metrics::ranking_metrics(ranks, ks);
}

void save_lp(const std::string& dir, const EmbeddingModel& model,
             const corpus::TripleStore& store, std::uint64_t seed) {
  fs::create_directories(dir);
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << 1;
  out << YAML::Key << "task" << YAML::Value << "lp";
  out << YAML::Key << "kind" << YAML::Value << lp_kind_name(model.kind());
  out << YAML::Key << "dim" << YAML::Value << model.dim();
  out << YAML::Key << "seed" << YAML::Value << seed;
  out << YAML::EndMap;
  corpus::write_text_file((fs::path(dir) / "config.yaml").string(),
                          std::string(out.c_str()) + "\n");

  std::ostringstream entities;
  for (const std::string& e : store.entities()) entities << e << '\n';
  corpus::write_text_file((fs::path(dir) / "vocab.txt").string(), entities.str());
  std::ostringstream relations;
  for (const std::string& r : store.relations()) relations << r << '\n';
  corpus::write_text_file((fs::path(dir) / "relations.txt").string(),
                          relations.str());

  std::ostringstream triples;
  for (const auto& [s, p, o] : store.triples()) {
    triples << store.entity_name(s) << '\t' << store.relation_name(p) << '\t'
            << store.entity_name(o) << '\n';
  }
  corpus::write_text_file((fs::path(dir) / "triples.tsv").string(), triples.str());

  std::vector<engine::NamedTensor> tensors;
  for (const auto& [name, var] : model.parameters()) {
    tensors.push_back({name, var.value()});
  }
  engine::write_checkpoint((fs::path(dir) / "params.ckpt").string(), tensors);
}

LpBundle load_lp(const std::string& dir) {
  const fs::path config_path = fs::path(dir) / "config.yaml";
  if (!fs::exists(config_path)) {
    throw Error(ErrorKind::kCorruptCheckpoint, "missing file config.yaml in " + dir);
  }
  YAML::Node node = YAML::LoadFile(config_path.string());
  if (!node["format_version"] || node["format_version"].as<int>() != 1) {
    throw Error(ErrorKind::kVersionMismatch, "config.yaml format_version is not 1");
  }
  const LpKind kind = lp_kind_from_string(node["kind"].as<std::string>("complex"));
  const std::int64_t dim = node["dim"].as<std::int64_t>(16);
  const std::uint64_t seed = node["seed"].as<std::uint64_t>(1);

  auto read_lines = [&](const char* file) {
    const fs::path path = fs::path(dir) / file;
    if (!fs::exists(path)) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  std::string("missing file ") + file + " in " + dir);
    }
    std::istringstream in(corpus::read_text_file(path.string()));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(line);
    return lines;
  };

  corpus::TripleStore store;
  for (const std::string& e : read_lines("vocab.txt")) store.add_entity(e);
  for (const std::string& r : read_lines("relations.txt")) store.add_relation(r);
  const fs::path triples_path = fs::path(dir) / "triples.tsv";
  if (fs::exists(triples_path)) {
    for (const auto& [s, p, o] : resolve_triples(
             store, corpus::read_text_file(triples_path.string()))) {
      store.add_triple(s, p, o);
    }
  }

  EmbeddingModel model(kind, store.num_entities(), store.num_relations(), dim,
                       seed);
  auto stored = engine::read_checkpoint((fs::path(dir) / "params.ckpt").string());
  auto params = model.parameters();
  if (stored.size() != params.size()) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "checkpoint holds " + std::to_string(stored.size()) +
                    " tensors, model needs " + std::to_string(params.size()));
  }
  for (auto& [name, var] : params) {
    const auto it =
        std::find_if(stored.begin(), stored.end(),
                     [&](const engine::NamedTensor& nt) { return nt.name == name; });
    if (it == stored.end()) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  "checkpoint is missing parameter \"" + name + "\"");
    }
    if (it->tensor.shape() != var.value().shape()) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  "parameter \"" + name + "\" has shape " +
                      engine::shape_str(it->tensor.shape()) + ", expected " +
                      engine::shape_str(var.value().shape()));
    }
    var.value() = it->tensor;
  }
  return LpBundle{std::move(model), std::move(store)};
}

}  // namespace mrkit::zoo
