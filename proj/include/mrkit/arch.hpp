// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "mrkit/error.hpp"

namespace mrkit::dsl {

enum class BlockType {
  kEmbed,
  kCharEmbed,
  kDense,
  kHighway,
  kSeqEncoder,
  kAttention,
  kCombine,
  kPool,
  kSpanHead,
  kClassifier,
};

struct BlockInfo {
  BlockType type;
  const char* name;
  int min_inputs;
  int max_inputs;
  bool fixed_outputs;  // emits fixed keys; no output key allowed
};

const std::vector<BlockInfo>& block_registry();
const BlockInfo& block_info(BlockType type);
std::optional<BlockType> block_type_by_name(std::string_view name);
// Closest registry name by edit distance, for UnknownBlock suggestions.
std::string nearest_block_name(std::string_view name);

// One scalar hyperparameter value as written in the config.
class HyperValue {
 public:
  using Storage = std::variant<std::int64_t, double, bool, std::string>;

  HyperValue() : value_(std::int64_t{0}) {}
  explicit HyperValue(Storage v) : value_(std::move(v)) {}

  std::int64_t as_int(std::int64_t fallback) const;
  double as_double(double fallback) const;
  bool as_bool(bool fallback) const;
  std::string as_string(const std::string& fallback) const;

 private:
  Storage value_;
};

struct BlockSpec {
  BlockType type = BlockType::kDense;
  std::string type_name;
  std::vector<std::string> input_keys;
  std::optional<std::string> output_key;
  std::map<std::string, HyperValue> hyperparams;
  int line = 0;  // 1-based config line for diagnostics

  std::int64_t hyper_int(const std::string& key, std::int64_t fallback) const;
  double hyper_double(const std::string& key, double fallback) const;
  bool hyper_bool(const std::string& key, bool fallback) const;
  std::string hyper_string(const std::string& key, const std::string& fallback) const;
};

// Parses the YAML-subset architecture config (mappings, sequences, scalars)
// into block specs in file order. A missing output key defaults to the first
// input key; blocks with fixed output keys take no output key at all.
std::vector<BlockSpec> parse_arch(const std::string& config_text);

enum class Task { kNli, kQa };
Task task_from_string(const std::string& name);
std::string task_name(Task task);

// A dim is either concrete or a named symbol (batch, q_len, support_len,
// char_len). Feature dims are always concrete after shape inference.
using SymDim = std::variant<std::int64_t, std::string>;
using SymShape = std::vector<SymDim>;

std::string sym_shape_str(const SymShape& shape);
bool sym_dim_equal(const SymDim& a, const SymDim& b);

enum class MaskKind { kNone, kQuestion, kSupport };

struct KeyInfo {
  SymShape shape;
  int producer_block = -1;  // -1 for start keys
  MaskKind mask = MaskKind::kNone;
};

struct ArchDims {
  std::int64_t repr_dim = 128;
  std::int64_t repr_dim_input = 128;
};

// The compiled, shape-checked DAG. Keys resolve strictly to start keys or
// earlier blocks; no key is ever redefined.
struct ArchGraph {
  Task task = Task::kNli;
  ArchDims dims;
  std::vector<BlockSpec> blocks;
  std::map<std::string, KeyInfo> keys;
  std::vector<std::string> key_order;

  std::vector<std::string> terminal_keys() const;
  std::string shape_table() const;
};

// Start keys shared by the QA-style tasks.
const std::vector<std::pair<std::string, KeyInfo>>& start_keys();

ArchGraph build_graph(std::vector<BlockSpec> specs, Task task, ArchDims dims);

// Convenience: parse + build from a config whose "task" entry, when present,
// must agree with the requested task.
ArchGraph compile_arch(const std::string& config_text, Task task, ArchDims dims);

}  // namespace mrkit::dsl
