// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>

#include "mrkit/arch.hpp"
#include "mrkit/modules.hpp"

namespace mrkit::dsl {

// A compiled architecture instantiated over the engine. Parameters are
// allocated at setup with seeded initialisation (Glorot-uniform matrices,
// zero biases, uniform(-0.05, 0.05) embedding rows) in block order, so two
// instantiations with the same seed are byte-identical.
class DslModel : public core::ModelModule {
 public:
  explicit DslModel(ArchGraph graph);

  const ArchGraph& graph() const { return graph_; }
  std::int64_t parameter_count() const;

  // Replaces the shared word-embedding table (e.g. with pretrained rows).
  void set_word_embeddings(engine::Tensor table);

  std::vector<core::TensorPort> input_ports() const override;
  std::vector<core::TensorPort> output_ports() const override;
  std::vector<core::TensorPort> training_input_ports() const override;
  std::vector<core::TensorPort> training_output_ports() const override;

  void setup(const textpipe::Vocab& vocab, std::uint64_t seed) override;
  bool is_setup() const override { return setup_; }

  core::PortVars forward(engine::Tape& tape, const textpipe::Batch& batch,
                         bool training) override;

  std::vector<std::pair<std::string, engine::Var>> parameters() override;

 private:
  engine::Var param(const std::string& name) const;
  void add_param(const std::string& name, engine::Tensor value);

  ArchGraph graph_;
  bool setup_ = false;
  bool uses_word_embeddings_ = false;
  bool needs_question_mask_ = false;
  bool needs_support_mask_ = false;
  std::vector<std::string> used_start_keys_;
  std::vector<std::pair<std::string, engine::Var>> params_;
  std::map<std::string, engine::Var> params_by_name_;
  Rng dropout_rng_{0};
};

std::shared_ptr<DslModel> instantiate(ArchGraph graph);

}  // namespace mrkit::dsl
