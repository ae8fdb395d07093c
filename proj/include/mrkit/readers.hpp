// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "mrkit/dslmodel.hpp"
#include "mrkit/reader.hpp"

namespace mrkit::zoo {

// Shared text input module for the classification and span tasks: builds the
// vocabulary at setup, emits the standard sequence ports, and adds the
// task's target ports on training batches.
class TextInputModule : public core::InputModule {
 public:
  enum class TaskKind { kNli, kQa };

  explicit TextInputModule(TaskKind task, std::int64_t min_count = 1);

  std::vector<core::TensorPort> output_ports() const override;
  std::vector<core::TensorPort> training_output_ports() const override;

  void setup(const corpus::Dataset& train) override;
  bool is_setup() const override { return vocab_.frozen(); }

  std::vector<textpipe::Batch> batches(const corpus::Dataset& dataset,
                                       std::int64_t batch_size,
                                       std::optional<std::uint64_t> shuffle_seed,
                                       bool training) const override;

  const textpipe::Vocab* vocab() const override { return &vocab_; }
  void restore_vocab(textpipe::Vocab vocab) override { vocab_ = std::move(vocab); }

 private:
  TaskKind task_;
  std::int64_t min_count_;
  textpipe::Vocab vocab_;
};

// Softmax over the class logits; the answer is the argmax candidate and all
// candidate probabilities are exposed for error analysis.
class NliOutputModule : public core::OutputModule {
 public:
  std::vector<core::TensorPort> input_ports() const override;
  bool classification() const override { return true; }
  std::vector<core::ReaderAnswer> produce(
      const std::vector<const corpus::QASetting*>& instances,
      const std::map<std::string, engine::Tensor>& tensors) const override;
};

inline constexpr std::int64_t kMaxSpanTokens = 16;

struct SpanPrediction {
  std::size_t start_token = 0;
  std::size_t end_token = 0;  // inclusive
  double score = 0.0;
  corpus::CharSpan char_span;
  std::string text;
};

// Argmax over valid (start <= end, end - start < kMaxSpanTokens) pairs of
// start_scores[start] + end_scores[end], decoded back to characters through
// the token offsets. Throws NoValidSpan when the support has no tokens.
SpanPrediction decode_span(std::span<const double> start_scores,
                           std::span<const double> end_scores,
                           std::size_t length,
                           const std::vector<textpipe::Token>& tokens,
                           const std::string& support,
                           std::int64_t max_span_tokens = kMaxSpanTokens);

class QaOutputModule : public core::OutputModule {
 public:
  std::vector<core::TensorPort> input_ports() const override;
  std::vector<core::ReaderAnswer> produce(
      const std::vector<const corpus::QASetting*>& instances,
      const std::map<std::string, engine::Tensor>& tensors) const override;
};

// Reader factories: compile the architecture for the task, wire the modules,
// and validate the signature.
core::Reader nli_reader(const std::string& arch_config_text,
                        core::ReaderConfig config);
core::Reader qa_reader(const std::string& arch_config_text,
                       core::ReaderConfig config);

// Dispatch on config.task ("nli" or "qa") using config.arch_text.
core::Reader make_reader(core::ReaderConfig config);

// Rebuilds a reader from a save directory and restores vocab + parameters.
core::Reader load_reader(const std::string& dir);

// Replaces the model's word embeddings with rows loaded from a pretrained
// file; returns the coverage fraction.
double apply_pretrained_embeddings(core::Reader& reader, const std::string& path);

}  // namespace mrkit::zoo
