// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/arch.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <sstream>

namespace mrkit::dsl {

const std::vector<BlockInfo>& block_registry() {
  static const std::vector<BlockInfo> kRegistry{
      {BlockType::kEmbed, "embed", 1, 1, false},
      {BlockType::kCharEmbed, "char_embed", 1, 1, false},
      {BlockType::kDense, "dense", 1, 1, false},
      {BlockType::kHighway, "highway", 1, 1, false},
      {BlockType::kSeqEncoder, "seq_encoder", 1, 1, false},
      {BlockType::kAttention, "attention", 2, 2, false},
      {BlockType::kCombine, "combine", 2, 2, false},
      {BlockType::kPool, "pool", 1, 1, false},
      {BlockType::kSpanHead, "span_head", 2, 2, true},
      {BlockType::kClassifier, "classifier", 1, 1, false},
  };
  return kRegistry;
}

const BlockInfo& block_info(BlockType type) {
  for (const BlockInfo& info : block_registry()) {
    if (info.type == type) return info;
  }
  throw std::logic_error("unregistered block type");
}

std::optional<BlockType> block_type_by_name(std::string_view name) {
  for (const BlockInfo& info : block_registry()) {
    if (name == info.name) return info.type;
  }
  return std::nullopt;
}

namespace {

std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

std::string nearest_block_name(std::string_view name) {
  std::string best;
  std::size_t best_distance = SIZE_MAX;
  for (const BlockInfo& info : block_registry()) {
    const std::size_t d = edit_distance(name, info.name);
    if (d < best_distance) {
      best_distance = d;
      best = info.name;
    }
  }
  return best;
}

std::int64_t HyperValue::as_int(std::int64_t fallback) const {
  if (const auto* v = std::get_if<std::int64_t>(&value_)) return *v;
  return fallback;
}
double HyperValue::as_double(double fallback) const {
  if (const auto* v = std::get_if<double>(&value_)) return *v;
  if (const auto* v = std::get_if<std::int64_t>(&value_))
    return static_cast<double>(*v);
  return fallback;
}
bool HyperValue::as_bool(bool fallback) const {
  if (const auto* v = std::get_if<bool>(&value_)) return *v;
  return fallback;
}
std::string HyperValue::as_string(const std::string& fallback) const {
  if (const auto* v = std::get_if<std::string>(&value_)) return *v;
  return fallback;
}

std::int64_t BlockSpec::hyper_int(const std::string& key, std::int64_t fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second.as_int(fallback);
}
double BlockSpec::hyper_double(const std::string& key, double fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second.as_double(fallback);
}
bool BlockSpec::hyper_bool(const std::string& key, bool fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second.as_bool(fallback);
}
std::string BlockSpec::hyper_string(const std::string& key,
                                    const std::string& fallback) const {
  auto it = hyperparams.find(key);
  return it == hyperparams.end() ? fallback : it->second.as_string(fallback);
}

namespace {

int node_line(const YAML::Node& node) { return node.Mark().line + 1; }

[[noreturn]] void parse_fail(int line, const std::string& message) {
  throw Error(ErrorKind::kParseError,
              "line " + std::to_string(line) + ": " + message);
}

HyperValue scalar_value(const YAML::Node& node) {
  // YAML scalars are untyped text; classify the way the config author would.
  const std::string raw = node.Scalar();
  if (raw == "true" || raw == "True") return HyperValue(HyperValue::Storage{true});
  if (raw == "false" || raw == "False")
    return HyperValue(HyperValue::Storage{false});
  try {
    std::size_t used = 0;
    const long long i = std::stoll(raw, &used);
    if (used == raw.size()) return HyperValue(HyperValue::Storage{static_cast<std::int64_t>(i)});
  } catch (...) {
  }
  try {
    std::size_t used = 0;
    const double d = std::stod(raw, &used);
    if (used == raw.size()) return HyperValue(HyperValue::Storage{d});
  } catch (...) {
  }
  return HyperValue(HyperValue::Storage{raw});
}

}  // namespace

std::vector<BlockSpec> parse_arch(const std::string& config_text) {
  YAML::Node root;
  try {
    root = YAML::Load(config_text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kParseError,
                "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (!root.IsMap()) {
    parse_fail(1, "config must be a mapping with a \"blocks\" sequence");
  }
  const YAML::Node blocks = root["blocks"];
  if (!blocks || !blocks.IsSequence()) {
    parse_fail(node_line(root), "missing \"blocks\" sequence");
  }

  std::vector<BlockSpec> specs;
  for (const YAML::Node& entry : blocks) {
    if (!entry.IsMap()) {
      parse_fail(node_line(entry), "each block must be a mapping");
    }
    BlockSpec spec;
    spec.line = node_line(entry);

    const YAML::Node type = entry["type"];
    if (!type || !type.IsScalar()) {
      parse_fail(spec.line, "block needs a scalar \"type\"");
    }
    spec.type_name = type.Scalar();
    const auto block_type = block_type_by_name(spec.type_name);
    if (!block_type.has_value()) {
      throw Error(ErrorKind::kUnknownBlock,
                  "line " + std::to_string(spec.line) + ": unknown block \"" +
                      spec.type_name + "\"; did you mean \"" +
                      nearest_block_name(spec.type_name) + "\"?");
    }
    spec.type = *block_type;
    const BlockInfo& info = block_info(spec.type);

    const YAML::Node input = entry["input"];
    if (!input) {
      parse_fail(spec.line, "block needs an \"input\" key or list of keys");
    }
    if (input.IsScalar()) {
      spec.input_keys.push_back(input.Scalar());
    } else if (input.IsSequence()) {
      for (const YAML::Node& k : input) {
        if (!k.IsScalar()) parse_fail(spec.line, "input keys must be scalars");
        spec.input_keys.push_back(k.Scalar());
      }
    } else {
      parse_fail(spec.line, "\"input\" must be a key or a list of keys");
    }
    if (static_cast<int>(spec.input_keys.size()) < info.min_inputs ||
        static_cast<int>(spec.input_keys.size()) > info.max_inputs) {
      throw Error(ErrorKind::kBadArity,
                  "line " + std::to_string(spec.line) + ": block \"" +
                      spec.type_name + "\" takes " +
                      std::to_string(info.min_inputs) +
                      (info.min_inputs == info.max_inputs
                           ? ""
                           : ".." + std::to_string(info.max_inputs)) +
                      " inputs, got " + std::to_string(spec.input_keys.size()));
    }

    const YAML::Node output = entry["output"];
    if (output) {
      if (!output.IsScalar()) parse_fail(spec.line, "\"output\" must be a key");
      if (info.fixed_outputs) {
        parse_fail(spec.line, "block \"" + spec.type_name +
                                  "\" emits fixed output keys and takes no "
                                  "\"output\"");
      }
      spec.output_key = output.Scalar();
    } else if (!info.fixed_outputs) {
      // the defaulting rule: absent output falls back to the first input key
      spec.output_key = spec.input_keys.front();
    }

    for (const auto& kv : entry) {
      const std::string key = kv.first.Scalar();
      if (key == "type" || key == "input" || key == "output") continue;
      if (!kv.second.IsScalar()) {
        parse_fail(spec.line, "hyperparameter \"" + key + "\" must be a scalar");
      }
      spec.hyperparams.emplace(key, scalar_value(kv.second));
    }
    specs.push_back(std::move(spec));
  }
  return specs;
}

Task task_from_string(const std::string& name) {
  if (name == "nli") return Task::kNli;
  if (name == "qa") return Task::kQa;
  throw Error(ErrorKind::kParseError, "unknown task \"" + name + "\"");
}

std::string task_name(Task task) { return task == Task::kNli ? "nli" : "qa"; }

std::string sym_shape_str(const SymShape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    if (const auto* d = std::get_if<std::int64_t>(&shape[i])) {
      os << *d;
    } else {
      os << std::get<std::string>(shape[i]);
    }
  }
  os << ']';
  return os.str();
}

bool sym_dim_equal(const SymDim& a, const SymDim& b) { return a == b; }

const std::vector<std::pair<std::string, KeyInfo>>& start_keys() {
  static const std::vector<std::pair<std::string, KeyInfo>> kStart{
      {"question", {{std::string("batch"), std::string("q_len")}, -1, MaskKind::kQuestion}},
      {"char_question",
       {{std::string("batch"), std::string("q_len"), std::string("char_len")},
        -1,
        MaskKind::kQuestion}},
      {"support",
       {{std::string("batch"), std::string("support_len")}, -1, MaskKind::kSupport}},
      {"char_support",
       {{std::string("batch"), std::string("support_len"), std::string("char_len")},
        -1,
        MaskKind::kSupport}},
  };
  return kStart;
}

namespace {

[[noreturn]] void shape_fail(int block_index, const BlockSpec& spec,
                             const std::string& message) {
  throw Error(ErrorKind::kShapeError,
              "block " + std::to_string(block_index) + " (" + spec.type_name +
                  ", line " + std::to_string(spec.line) + "): " + message);
}

bool is_symbol(const SymDim& d) { return std::holds_alternative<std::string>(d); }

std::int64_t concrete_last_dim(const SymShape& shape, int block_index,
                               const BlockSpec& spec) {
  if (shape.empty() || is_symbol(shape.back())) {
    shape_fail(block_index, spec,
               "needs a concrete feature dim, got " + sym_shape_str(shape));
  }
  return std::get<std::int64_t>(shape.back());
}

bool is_time_symbol(const SymDim& d) {
  if (!is_symbol(d)) return false;
  const std::string& s = std::get<std::string>(d);
  return s == "q_len" || s == "support_len";
}

// [batch, time, feature] sequences, the shape every seq block works on.
void require_sequence(const SymShape& shape, int block_index,
                      const BlockSpec& spec) {
  if (shape.size() != 3 || !is_time_symbol(shape[1]) || is_symbol(shape[2])) {
    shape_fail(block_index, spec,
               "expected [batch, time, feature], got " + sym_shape_str(shape));
  }
}

}  // namespace

std::vector<std::string> ArchGraph::terminal_keys() const {
  if (task == Task::kNli) return {"logits"};
  return {"start_scores", "end_scores"};
}

std::string ArchGraph::shape_table() const {
  std::ostringstream os;
  for (const std::string& key : key_order) {
    const KeyInfo& info = keys.at(key);
    os << key << ": " << sym_shape_str(info.shape);
    if (info.producer_block < 0) {
      os << "  (start key)";
    } else {
      os << "  (block " << info.producer_block << ", "
         << blocks[static_cast<std::size_t>(info.producer_block)].type_name << ")";
    }
    os << '\n';
  }
  return os.str();
}

ArchGraph build_graph(std::vector<BlockSpec> specs, Task task, ArchDims dims) {
  ArchGraph graph;
  graph.task = task;
  graph.dims = dims;
  for (const auto& [name, info] : start_keys()) {
    graph.keys.emplace(name, info);
    graph.key_order.push_back(name);
  }

  auto resolve = [&graph](const std::string& key, int block_index,
                          const BlockSpec& spec) -> const KeyInfo& {
    auto it = graph.keys.find(key);
    if (it == graph.keys.end()) {
      throw Error(ErrorKind::kUndefinedKey,
                  "block " + std::to_string(block_index) + " (" +
                      spec.type_name + ", line " + std::to_string(spec.line) +
                      "): undefined key \"" + key + "\"");
    }
    return it->second;
  };
  auto define = [&graph](const std::string& key, KeyInfo info, int block_index,
                         const BlockSpec& spec) {
    if (graph.keys.contains(key)) {
      throw Error(ErrorKind::kKeyRedefinition,
                  "block " + std::to_string(block_index) + " (" +
                      spec.type_name + ", line " + std::to_string(spec.line) +
                      "): key \"" + key + "\" is already defined; give the "
                      "block an explicit output key");
    }
    graph.keys.emplace(key, std::move(info));
    graph.key_order.push_back(key);
  };

  for (int bi = 0; bi < static_cast<int>(specs.size()); ++bi) {
    const BlockSpec& spec = specs[static_cast<std::size_t>(bi)];
    std::vector<const KeyInfo*> in;
    in.reserve(spec.input_keys.size());
    for (const std::string& key : spec.input_keys) {
      in.push_back(&resolve(key, bi, spec));
    }

    switch (spec.type) {
      case BlockType::kEmbed: {
        const SymShape& s = in[0]->shape;
        if (s.size() != 2 || !is_time_symbol(s[1])) {
          shape_fail(bi, spec,
                     "expected an id sequence [batch, time], got " +
                         sym_shape_str(s));
        }
        define(*spec.output_key,
               {{s[0], s[1], dims.repr_dim_input}, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kCharEmbed: {
        const SymShape& s = in[0]->shape;
        if (s.size() != 3 || !is_time_symbol(s[1]) ||
            s[2] != SymDim{std::string("char_len")}) {
          shape_fail(bi, spec,
                     "expected char ids [batch, time, char_len], got " +
                         sym_shape_str(s));
        }
        const std::int64_t units = spec.hyper_int("units", 32);
        define(*spec.output_key, {{s[0], s[1], units}, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kDense: {
        const SymShape& s = in[0]->shape;
        if (s.size() < 2) {
          shape_fail(bi, spec, "rank too low: " + sym_shape_str(s));
        }
        concrete_last_dim(s, bi, spec);
        const std::int64_t units = spec.hyper_int("units", dims.repr_dim);
        const std::string activation = spec.hyper_string("activation", "relu");
        if (activation != "relu" && activation != "tanh" &&
            activation != "sigmoid" && activation != "linear") {
          shape_fail(bi, spec, "unknown activation \"" + activation + "\"");
        }
        SymShape out = s;
        out.back() = units;
        define(*spec.output_key, {out, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kHighway: {
        const SymShape& s = in[0]->shape;
        if (s.size() < 2) {
          shape_fail(bi, spec, "rank too low: " + sym_shape_str(s));
        }
        concrete_last_dim(s, bi, spec);
        define(*spec.output_key, {s, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kSeqEncoder: {
        require_sequence(in[0]->shape, bi, spec);
        const std::string kind = spec.hyper_string("kind", "gated_recurrent");
        if (kind != "gated_recurrent") {
          shape_fail(bi, spec, "unknown encoder kind \"" + kind + "\"");
        }
        const std::int64_t units = spec.hyper_int("units", dims.repr_dim);
        const bool bidirectional = spec.hyper_bool("bidirectional", false);
        SymShape out = in[0]->shape;
        out.back() = bidirectional ? 2 * units : units;
        define(*spec.output_key, {out, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kAttention: {
        require_sequence(in[0]->shape, bi, spec);
        require_sequence(in[1]->shape, bi, spec);
        const std::string kind = spec.hyper_string("kind", "dot");
        if (kind != "dot" && kind != "bilinear") {
          shape_fail(bi, spec, "unknown attention kind \"" + kind + "\"");
        }
        const std::int64_t da = concrete_last_dim(in[0]->shape, bi, spec);
        const std::int64_t db = concrete_last_dim(in[1]->shape, bi, spec);
        if (kind == "dot" && da != db) {
          shape_fail(bi, spec,
                     "dot attention needs equal feature dims, got " +
                         sym_shape_str(in[0]->shape) + " vs " +
                         sym_shape_str(in[1]->shape));
        }
        if (in[1]->mask == MaskKind::kNone) {
          shape_fail(bi, spec, "attended-over sequence carries no mask");
        }
        SymShape out = in[0]->shape;
        out.back() = db;
        define(*spec.output_key, {out, bi, in[0]->mask}, bi, spec);
        break;
      }
      case BlockType::kCombine: {
        const std::string mode = spec.hyper_string("mode", "concat");
        const SymShape& a = in[0]->shape;
        const SymShape& b = in[1]->shape;
        if (mode == "concat") {
          if (a.size() != b.size() || a.size() < 2 ||
              !std::equal(a.begin(), a.end() - 1, b.begin(), sym_dim_equal)) {
            shape_fail(bi, spec,
                       "concat needs equal dims except the last, got " +
                           sym_shape_str(a) + " vs " + sym_shape_str(b));
          }
          SymShape out = a;
          out.back() = concrete_last_dim(a, bi, spec) + concrete_last_dim(b, bi, spec);
          define(*spec.output_key, {out, bi, in[0]->mask}, bi, spec);
        } else if (mode == "mul" || mode == "sub") {
          if (a.size() != b.size() ||
              !std::equal(a.begin(), a.end(), b.begin(), sym_dim_equal)) {
            shape_fail(bi, spec, "mode \"" + mode +
                                     "\" needs identical shapes, got " +
                                     sym_shape_str(a) + " vs " +
                                     sym_shape_str(b));
          }
          define(*spec.output_key, {a, bi, in[0]->mask}, bi, spec);
        } else {
          shape_fail(bi, spec, "unknown combine mode \"" + mode + "\"");
        }
        break;
      }
      case BlockType::kPool: {
        const SymShape& s = in[0]->shape;
        if (s.size() < 3) {
          shape_fail(bi, spec, "rank too low for pooling: " + sym_shape_str(s));
        }
        require_sequence(s, bi, spec);
        const std::string mode = spec.hyper_string("mode", "max");
        if (mode != "max" && mode != "mean") {
          shape_fail(bi, spec, "unknown pool mode \"" + mode + "\"");
        }
        define(*spec.output_key, {{s[0], s[2]}, bi, MaskKind::kNone}, bi, spec);
        break;
      }
      case BlockType::kSpanHead: {
        require_sequence(in[0]->shape, bi, spec);
        if (in[0]->shape[1] != SymDim{std::string("support_len")}) {
          shape_fail(bi, spec,
                     "span head needs a support-aligned sequence, got " +
                         sym_shape_str(in[0]->shape));
        }
        const SymShape& q = in[1]->shape;
        if (q.size() != 2 || is_symbol(q[1])) {
          shape_fail(bi, spec,
                     "span head needs a pooled question [batch, dim], got " +
                         sym_shape_str(q));
        }
        define("start_scores",
               {{in[0]->shape[0], in[0]->shape[1]}, bi, MaskKind::kSupport}, bi,
               spec);
        define("end_scores",
               {{in[0]->shape[0], in[0]->shape[1]}, bi, MaskKind::kSupport}, bi,
               spec);
        break;
      }
      case BlockType::kClassifier: {
        const SymShape& s = in[0]->shape;
        if (s.size() != 2 || is_symbol(s[1])) {
          shape_fail(bi, spec,
                     "classifier needs [batch, dim], got " + sym_shape_str(s));
        }
        const std::int64_t classes = spec.hyper_int("classes", 0);
        if (classes < 2) {
          shape_fail(bi, spec, "classifier needs a \"classes\" count >= 2");
        }
        define(*spec.output_key, {{s[0], classes}, bi, MaskKind::kNone}, bi, spec);
        break;
      }
    }
  }
  graph.blocks = std::move(specs);

  for (const std::string& key : graph.terminal_keys()) {
    auto it = graph.keys.find(key);
    if (it == graph.keys.end()) {
      throw Error(ErrorKind::kMissingTerminal,
                  task_name(task) + " graphs must produce the key \"" + key +
                      "\"");
    }
    SymShape expected;
    if (key == "logits") {
      expected = {std::string("batch"), std::int64_t{3}};
    } else {
      expected = {std::string("batch"), std::string("support_len")};
    }
    if (it->second.shape != expected) {
      throw Error(ErrorKind::kShapeError,
                  "terminal key \"" + key + "\" has shape " +
                      sym_shape_str(it->second.shape) + ", expected " +
                      sym_shape_str(expected));
    }
  }
  return graph;
}

ArchGraph compile_arch(const std::string& config_text, Task task, ArchDims dims) {
  YAML::Node root;
  try {
    root = YAML::Load(config_text);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kParseError,
                "line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
  }
  if (root.IsMap() && root["task"] && root["task"].IsScalar()) {
    const Task declared = task_from_string(root["task"].Scalar());
    if (declared != task) {
      throw Error(ErrorKind::kParseError,
                  "config declares task \"" + task_name(declared) +
                      "\" but \"" + task_name(task) + "\" was requested");
    }
  }
  return build_graph(parse_arch(config_text), task, dims);
}

}  // namespace mrkit::dsl
