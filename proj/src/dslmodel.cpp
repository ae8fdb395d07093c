// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/dslmodel.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "mrkit/ops.hpp"

namespace mrkit::dsl {

namespace {

using engine::Shape;
using engine::Tape;
using engine::Tensor;
using engine::Var;

Tensor glorot_uniform(Shape shape, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(shape[0] + shape[shape.size() - 1]));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.f64()) v = rng.uniform(-limit, limit);
  return t;
}

// (mask - 1) * 1e9: masked positions get a -1e9 shift, real ones none.
Var mask_shift(Tape& tape, const Tensor& mask, const Shape& target) {
  Tensor shift = Tensor::zeros(mask.shape());
  auto m = mask.f64();
  auto s = shift.f64();
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = (m[i] - 1.0) * 1e9;
  // shape the mask [dims..] -> [dims.., 1] so it expands over the feature axis
  Shape lifted = mask.shape();
  while (lifted.size() < target.size()) lifted.push_back(1);
  return engine::broadcast_to(
      tape, engine::reshape(tape, engine::constant(std::move(shift)), lifted),
      target);
}

// 0/1 mask expanded over the trailing feature axis.
Var mask_expand(Tape& tape, const Tensor& mask, const Shape& target) {
  Shape lifted = mask.shape();
  while (lifted.size() < target.size()) lifted.push_back(1);
  Tensor copy = mask;
  return engine::broadcast_to(
      tape, engine::reshape(tape, engine::constant(std::move(copy)), lifted),
      target);
}

Var apply_activation(Tape& tape, const Var& x, const std::string& activation) {
  if (activation == "relu") return engine::relu(tape, x);
  if (activation == "tanh") return engine::tanh_op(tape, x);
  if (activation == "sigmoid") return engine::sigmoid(tape, x);
  return x;  // linear
}

// Dense over the last axis of an arbitrary-rank tensor.
Var dense_apply(Tape& tape, const Var& x, const Var& w, const Var& b) {
  const Shape& s = x.value().shape();
  const std::int64_t din = s.back();
  const std::int64_t dout = w.value().dim(1);
  const std::int64_t rows = x.value().numel() / din;
  Var flat = engine::reshape(tape, x, {rows, din});
  Var out = engine::add(tape, engine::matmul(tape, flat, w), b);
  Shape out_shape = s;
  out_shape.back() = dout;
  return engine::reshape(tape, out, out_shape);
}

}  // namespace

DslModel::DslModel(ArchGraph graph) : graph_(std::move(graph)) {
  std::set<std::string> start_names;
  for (const auto& [name, info] : start_keys()) start_names.insert(name);
  std::set<std::string> used;
  for (const BlockSpec& spec : graph_.blocks) {
    for (const std::string& key : spec.input_keys) {
      if (start_names.contains(key)) used.insert(key);
      if (spec.type == BlockType::kEmbed) uses_word_embeddings_ = true;
    }
  }
  for (const auto& [name, info] : start_keys()) {
    if (used.contains(name)) {
      used_start_keys_.push_back(name);
      if (info.mask == MaskKind::kQuestion) needs_question_mask_ = true;
      if (info.mask == MaskKind::kSupport) needs_support_mask_ = true;
    }
  }
  // masks are also consumed by attention/pool over derived keys
  for (const auto& [key, info] : graph_.keys) {
    if (info.mask == MaskKind::kQuestion) needs_question_mask_ = true;
    if (info.mask == MaskKind::kSupport) needs_support_mask_ = true;
  }
}

std::vector<core::TensorPort> DslModel::input_ports() const {
  std::vector<core::TensorPort> result;
  for (const std::string& key : used_start_keys_) {
    if (key == "question") result.push_back(core::ports::question());
    if (key == "support") result.push_back(core::ports::support());
    if (key == "char_question") result.push_back(core::ports::char_question());
    if (key == "char_support") result.push_back(core::ports::char_support());
  }
  if (needs_question_mask_) result.push_back(core::ports::question_mask());
  if (needs_support_mask_) result.push_back(core::ports::support_mask());
  return result;
}

std::vector<core::TensorPort> DslModel::output_ports() const {
  if (graph_.task == Task::kNli) return {core::ports::logits()};
  return {core::ports::start_scores(), core::ports::end_scores()};
}

std::vector<core::TensorPort> DslModel::training_input_ports() const {
  if (graph_.task == Task::kNli) return {core::ports::answer_idx()};
  return {core::ports::answer_start(), core::ports::answer_end()};
}

std::vector<core::TensorPort> DslModel::training_output_ports() const {
  auto result = output_ports();
  result.push_back(core::ports::loss());
  return result;
}

void DslModel::add_param(const std::string& name, engine::Tensor value) {
  Var var(std::move(value), /*requires_grad=*/true);
  params_.emplace_back(name, var);
  params_by_name_.emplace(name, var);
}

engine::Var DslModel::param(const std::string& name) const {
  return params_by_name_.at(name);
}

void DslModel::setup(const textpipe::Vocab& vocab, std::uint64_t seed) {
  params_.clear();
  params_by_name_.clear();
  dropout_rng_ = Rng(derive_seed(seed, "dropout"));

  if (uses_word_embeddings_) {
    add_param("embedding.table",
              textpipe::random_embeddings(vocab.size(), graph_.dims.repr_dim_input,
                                          derive_seed(seed, "embeddings")));
  }

  Rng rng(derive_seed(seed, "params"));
  const std::int64_t hidden = graph_.dims.repr_dim;
  for (int bi = 0; bi < static_cast<int>(graph_.blocks.size()); ++bi) {
    const BlockSpec& spec = graph_.blocks[static_cast<std::size_t>(bi)];
    const std::string prefix = "block" + std::to_string(bi) + ".";
    auto in_dim = [&](int which) {
      const KeyInfo& info = graph_.keys.at(spec.input_keys[static_cast<std::size_t>(which)]);
      return std::get<std::int64_t>(info.shape.back());
    };
    switch (spec.type) {
      case BlockType::kEmbed:
        break;  // shares embedding.table
      case BlockType::kCharEmbed: {
        const std::int64_t units = spec.hyper_int("units", 32);
        add_param(prefix + "char_table",
                  textpipe::random_embeddings(textpipe::kCharVocabSize, units,
                                              rng.next_u64()));
        break;
      }
      case BlockType::kDense: {
        const std::int64_t din = in_dim(0);
        const std::int64_t units = spec.hyper_int("units", hidden);
        add_param(prefix + "W", glorot_uniform({din, units}, rng));
        add_param(prefix + "b", Tensor::zeros({units}));
        break;
      }
      case BlockType::kHighway: {
        const std::int64_t d = in_dim(0);
        add_param(prefix + "W_transform", glorot_uniform({d, d}, rng));
        add_param(prefix + "b_transform", Tensor::zeros({d}));
        add_param(prefix + "W_carry", glorot_uniform({d, d}, rng));
        add_param(prefix + "b_carry", Tensor::zeros({d}));
        break;
      }
      case BlockType::kSeqEncoder: {
        const std::int64_t din = in_dim(0);
        const std::int64_t units = spec.hyper_int("units", hidden);
        const bool bidirectional = spec.hyper_bool("bidirectional", false);
        const int directions = bidirectional ? 2 : 1;
        for (int d = 0; d < directions; ++d) {
          const std::string dir = d == 0 ? "fwd." : "bwd.";
          add_param(prefix + dir + "W", glorot_uniform({din, 3 * units}, rng));
          add_param(prefix + dir + "U", glorot_uniform({units, 3 * units}, rng));
          add_param(prefix + dir + "b", Tensor::zeros({3 * units}));
        }
        break;
      }
      case BlockType::kAttention: {
        if (spec.hyper_string("kind", "dot") == "bilinear") {
          add_param(prefix + "W", glorot_uniform({in_dim(0), in_dim(1)}, rng));
        }
        break;
      }
      case BlockType::kCombine:
      case BlockType::kPool:
        break;
      case BlockType::kSpanHead: {
        const std::int64_t d_seq = in_dim(0);
        const std::int64_t d_q = in_dim(1);
        add_param(prefix + "W_start", glorot_uniform({d_q, d_seq}, rng));
        add_param(prefix + "W_end", glorot_uniform({d_q, d_seq}, rng));
        break;
      }
      case BlockType::kClassifier: {
        const std::int64_t din = in_dim(0);
        const std::int64_t classes = spec.hyper_int("classes", 0);
        add_param(prefix + "W", glorot_uniform({din, classes}, rng));
        add_param(prefix + "b", Tensor::zeros({classes}));
        break;
      }
    }
  }
  setup_ = true;
}

std::int64_t DslModel::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& [name, var] : params_) total += var.value().numel();
  return total;
}

void DslModel::set_word_embeddings(engine::Tensor table) {
  Var var = param("embedding.table");
  if (table.shape() != var.value().shape()) {
    throw Error(ErrorKind::kShapeMismatch,
                "embedding table " + engine::shape_str(table.shape()) +
                    " vs expected " + engine::shape_str(var.value().shape()));
  }
  var.value() = std::move(table);
}

std::vector<std::pair<std::string, engine::Var>> DslModel::parameters() {
  return params_;
}

core::PortVars DslModel::forward(engine::Tape& tape, const textpipe::Batch& batch,
                                 bool training) {
  if (!setup_) {
    throw std::logic_error("DslModel::forward before setup");
  }
  std::map<std::string, Var> vals;

  auto mask_of = [&](MaskKind kind) -> const Tensor& {
    return batch.at(kind == MaskKind::kQuestion ? "question_mask"
                                                : "support_mask");
  };

  for (int bi = 0; bi < static_cast<int>(graph_.blocks.size()); ++bi) {
    const BlockSpec& spec = graph_.blocks[static_cast<std::size_t>(bi)];
    const std::string prefix = "block" + std::to_string(bi) + ".";
    auto arg = [&](int which) -> const Var& {
      return vals.at(spec.input_keys[static_cast<std::size_t>(which)]);
    };
    auto out_key = [&]() -> const std::string& { return *spec.output_key; };
    auto mask_kind_of_input = [&](int which) {
      return graph_.keys.at(spec.input_keys[static_cast<std::size_t>(which)]).mask;
    };

    switch (spec.type) {
      case BlockType::kEmbed: {
        const Tensor& ids = batch.at(spec.input_keys[0]);
        Var out = engine::lookup(tape, param("embedding.table"), ids);
        const double p = spec.hyper_double("dropout", 0.0);
        if (p > 0.0) out = engine::dropout(tape, out, p, training, dropout_rng_);
        vals.emplace(out_key(), out);
        break;
      }
      case BlockType::kCharEmbed: {
        const Tensor& ids = batch.at(spec.input_keys[0]);
        Var rows = engine::lookup(tape, param(prefix + "char_table"), ids);
        // pad chars (id 0) must not win the max pool
        Tensor char_mask = Tensor::zeros(ids.shape());
        for (std::size_t i = 0; i < char_mask.f64().size(); ++i) {
          char_mask.f64()[i] = ids.i64()[i] != 0 ? 1.0 : 0.0;
        }
        Var shifted = engine::add(
            tape, rows, mask_shift(tape, char_mask, rows.value().shape()));
        vals.emplace(out_key(), engine::reduce_max(tape, shifted, 2));
        break;
      }
      case BlockType::kDense: {
        Var out = dense_apply(tape, arg(0), param(prefix + "W"), param(prefix + "b"));
        out = apply_activation(tape, out, spec.hyper_string("activation", "relu"));
        const double p = spec.hyper_double("dropout", 0.0);
        if (p > 0.0) out = engine::dropout(tape, out, p, training, dropout_rng_);
        vals.emplace(out_key(), out);
        break;
      }
      case BlockType::kHighway: {
        const Var& x = arg(0);
        Var t = engine::sigmoid(
            tape, dense_apply(tape, x, param(prefix + "W_transform"),
                              param(prefix + "b_transform")));
        Var h = engine::tanh_op(
            tape, dense_apply(tape, x, param(prefix + "W_carry"),
                              param(prefix + "b_carry")));
        // t*h + (1-t)*x
        Var out = engine::add(tape, engine::mul(tape, t, h),
                              engine::sub(tape, x, engine::mul(tape, t, x)));
        vals.emplace(out_key(), out);
        break;
      }
      case BlockType::kSeqEncoder: {
        const Var& x = arg(0);
        const Tensor& mask = mask_of(mask_kind_of_input(0));
        const std::int64_t b = x.value().dim(0);
        const std::int64_t len = x.value().dim(1);
        const std::int64_t din = x.value().dim(2);
        const std::int64_t units = spec.hyper_int("units", graph_.dims.repr_dim);
        const bool bidirectional = spec.hyper_bool("bidirectional", false);

        auto run_direction = [&](const std::string& dir, bool backward) {
          Var w = param(prefix + dir + "W");
          Var u = param(prefix + dir + "U");
          Var bias = param(prefix + dir + "b");
          Var h(Tensor::zeros({b, units}), false);
          std::vector<Var> states(static_cast<std::size_t>(len));
          for (std::int64_t step = 0; step < len; ++step) {
            const std::int64_t t = backward ? len - 1 - step : step;
            Var xt = engine::reshape(tape, engine::narrow(tape, x, 1, t, 1),
                                     {b, din});
            Var gx = engine::add(tape, engine::matmul(tape, xt, w), bias);
            Var gh = engine::matmul(tape, h, u);
            Var reset = engine::sigmoid(
                tape, engine::add(tape, engine::narrow(tape, gx, 1, 0, units),
                                  engine::narrow(tape, gh, 1, 0, units)));
            Var update = engine::sigmoid(
                tape,
                engine::add(tape, engine::narrow(tape, gx, 1, units, units),
                            engine::narrow(tape, gh, 1, units, units)));
            Var candidate = engine::tanh_op(
                tape,
                engine::add(
                    tape, engine::narrow(tape, gx, 1, 2 * units, units),
                    engine::mul(tape, reset,
                                engine::narrow(tape, gh, 1, 2 * units, units))));
            // h' = z*h + (1-z)*c, then the pad gate keeps h where mask is 0
            Var h_new = engine::add(
                tape, engine::mul(tape, update, h),
                engine::mul(tape, engine::affine(tape, update, -1.0, 1.0),
                            candidate));
            Tensor gate = Tensor::zeros({b, units});
            for (std::int64_t i = 0; i < b; ++i) {
              const double m = mask.f64()[i * len + t];
              for (std::int64_t j = 0; j < units; ++j)
                gate.f64()[i * units + j] = m;
            }
            Var gate_c = engine::constant(std::move(gate));
            h = engine::add(
                tape, engine::mul(tape, gate_c, h_new),
                engine::mul(tape, engine::affine(tape, gate_c, -1.0, 1.0), h));
            states[static_cast<std::size_t>(t)] =
                engine::reshape(tape, h, {b, 1, units});
          }
          return engine::concat(tape, states, 1);
        };

        Var out = run_direction("fwd.", false);
        if (bidirectional) {
          Var bwd = run_direction("bwd.", true);
          out = engine::concat(tape, {out, bwd}, 2);
        }
        vals.emplace(out_key(), out);
        break;
      }
      case BlockType::kAttention: {
        const Var& seq_a = arg(0);
        const Var& seq_b = arg(1);
        const Tensor& mask_b = mask_of(mask_kind_of_input(1));
        Var queries = seq_a;
        if (spec.hyper_string("kind", "dot") == "bilinear") {
          const std::int64_t da = seq_a.value().dim(2);
          const std::int64_t db = seq_b.value().dim(2);
          const std::int64_t rows = seq_a.value().dim(0) * seq_a.value().dim(1);
          queries = engine::reshape(
              tape,
              engine::matmul(tape, engine::reshape(tape, seq_a, {rows, da}),
                             param(prefix + "W")),
              {seq_a.value().dim(0), seq_a.value().dim(1), db});
        }
        Var scores =
            engine::matmul(tape, queries, engine::transpose_last2(tape, seq_b));
        Var probs = engine::masked_softmax(tape, scores, mask_b, -1);
        vals.emplace(out_key(), engine::matmul(tape, probs, seq_b));
        break;
      }
      case BlockType::kCombine: {
        const std::string mode = spec.hyper_string("mode", "concat");
        if (mode == "concat") {
          vals.emplace(out_key(),
                       engine::concat(tape, {arg(0), arg(1)},
                                      arg(0).value().rank() - 1));
        } else if (mode == "mul") {
          vals.emplace(out_key(), engine::mul(tape, arg(0), arg(1)));
        } else {
          vals.emplace(out_key(), engine::sub(tape, arg(0), arg(1)));
        }
        break;
      }
      case BlockType::kPool: {
        const Var& x = arg(0);
        const Tensor& mask = mask_of(mask_kind_of_input(0));
        if (spec.hyper_string("mode", "max") == "max") {
          Var shifted =
              engine::add(tape, x, mask_shift(tape, mask, x.value().shape()));
          vals.emplace(out_key(), engine::reduce_max(tape, shifted, 1));
        } else {
          Var masked =
              engine::mul(tape, x, mask_expand(tape, mask, x.value().shape()));
          Var sums = engine::reduce_sum(tape, masked, 1);  // [b, d]
          const std::int64_t b = x.value().dim(0);
          const std::int64_t len = x.value().dim(1);
          const std::int64_t d = x.value().dim(2);
          Tensor inv = Tensor::zeros({b, d});
          for (std::int64_t i = 0; i < b; ++i) {
            double count = 0.0;
            for (std::int64_t t = 0; t < len; ++t) count += mask.f64()[i * len + t];
            const double scale = count > 0.0 ? 1.0 / count : 0.0;
            for (std::int64_t j = 0; j < d; ++j) inv.f64()[i * d + j] = scale;
          }
          vals.emplace(out_key(),
                       engine::mul(tape, sums, engine::constant(std::move(inv))));
        }
        break;
      }
      case BlockType::kSpanHead: {
        const Var& seq = arg(0);
        const Var& q = arg(1);
        const std::int64_t b = seq.value().dim(0);
        const std::int64_t s_len = seq.value().dim(1);
        const std::int64_t d = seq.value().dim(2);
        auto head = [&](const std::string& w_name) {
          Var proj = engine::matmul(tape, q, param(prefix + w_name));  // [b, d]
          Var proj3 = engine::reshape(tape, proj, {b, d, 1});
          return engine::reshape(tape, engine::matmul(tape, seq, proj3),
                                 {b, s_len});
        };
        vals.emplace("start_scores", head("W_start"));
        vals.emplace("end_scores", head("W_end"));
        break;
      }
      case BlockType::kClassifier: {
        vals.emplace(out_key(), engine::add(tape,
                                            engine::matmul(tape, arg(0),
                                                           param(prefix + "W")),
                                            param(prefix + "b")));
        break;
      }
    }
  }

  core::PortVars out;
  for (const std::string& key : graph_.terminal_keys()) {
    out.emplace(key, vals.at(key));
  }

  if (training) {
    if (graph_.task == Task::kNli) {
      const Tensor& labels = batch.at("answer_idx");
      Var per_item = engine::cross_entropy(tape, out.at("logits"), labels);
      out.emplace("loss", engine::reduce_mean(tape, per_item));
    } else {
      const Tensor& mask = batch.at("support_mask");
      auto masked_ce = [&](const char* scores_key, const char* label_key) {
        Var shifted = engine::add(
            tape, out.at(scores_key),
            mask_shift(tape, mask, out.at(scores_key).value().shape()));
        return engine::reduce_mean(
            tape, engine::cross_entropy(tape, shifted, batch.at(label_key)));
      };
      out.emplace("loss",
                  engine::add(tape, masked_ce("start_scores", "answer_start"),
                              masked_ce("end_scores", "answer_end")));
    }
  }
  return out;
}

std::shared_ptr<DslModel> instantiate(ArchGraph graph) {
  return std::make_shared<DslModel>(std::move(graph));
}

}  // namespace mrkit::dsl
