// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mrkit/autodiff.hpp"
#include "mrkit/corpus.hpp"
#include "mrkit/ports.hpp"
#include "mrkit/textpipe.hpp"

namespace mrkit::core {

using PortVars = std::map<std::string, engine::Var>;

// Pre-processing: text instances to tensors, one port per produced tensor.
class InputModule {
 public:
  virtual ~InputModule() = default;

  virtual std::vector<TensorPort> output_ports() const = 0;
  // Target ports available only on training batches.
  virtual std::vector<TensorPort> training_output_ports() const = 0;

  virtual void setup(const corpus::Dataset& train) = 0;
  virtual bool is_setup() const = 0;

  // training=true adds the target ports (instances must carry answers).
  virtual std::vector<textpipe::Batch> batches(
      const corpus::Dataset& dataset, std::int64_t batch_size,
      std::optional<std::uint64_t> shuffle_seed, bool training) const = 0;

  // Serialisation surface; modules without a vocabulary return nullptr.
  virtual const textpipe::Vocab* vocab() const { return nullptr; }
  virtual void restore_vocab(textpipe::Vocab) {}
};

// The end-to-end model: consumes input ports, computes output ports, and on
// the training path a scalar "loss" port.
class ModelModule {
 public:
  virtual ~ModelModule() = default;

  virtual std::vector<TensorPort> input_ports() const = 0;
  virtual std::vector<TensorPort> output_ports() const = 0;
  virtual std::vector<TensorPort> training_input_ports() const = 0;
  virtual std::vector<TensorPort> training_output_ports() const = 0;

  // Allocates parameters once the vocabulary is known.
  virtual void setup(const textpipe::Vocab& vocab, std::uint64_t seed) = 0;
  virtual bool is_setup() const = 0;

  virtual PortVars forward(engine::Tape& tape, const textpipe::Batch& batch,
                           bool training) = 0;

  // Stable-order named parameters; the same objects across calls.
  virtual std::vector<std::pair<std::string, engine::Var>> parameters() = 0;
};

struct ReaderAnswer {
  std::string text;
  double score = 0.0;
  std::optional<corpus::CharSpan> span;   // extractive readers
  std::vector<double> candidate_probs;    // classification readers
};

// Converts computed port tensors back into human-readable answers.
class OutputModule {
 public:
  virtual ~OutputModule() = default;

  virtual std::vector<TensorPort> input_ports() const = 0;
  virtual bool classification() const { return false; }

  // One answer per batch row; `instances` are the batch rows in order.
  virtual std::vector<ReaderAnswer> produce(
      const std::vector<const corpus::QASetting*>& instances,
      const std::map<std::string, engine::Tensor>& tensors) const = 0;
};

}  // namespace mrkit::core
