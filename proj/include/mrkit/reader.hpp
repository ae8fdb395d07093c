// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <memory>

#include "mrkit/modules.hpp"
#include "mrkit/optimizer.hpp"

namespace mrkit::core {

struct ReaderConfig {
  std::string task;  // "nli" or "qa"
  std::int64_t batch_size = 128;
  std::int64_t repr_dim = 128;
  std::int64_t repr_dim_input = 128;
  std::uint64_t seed = 1;
  std::string arch_text;  // architecture description, stored on save
  std::string embeddings_path;  // optional pretrained embedding file
};

struct TrainOptions {
  int max_epochs = 1;
  engine::AdamConfig adam;
};

struct TrainingReport {
  std::vector<double> epoch_mean_loss;
  std::int64_t iterations = 0;
};

class Reader;

struct HookContext {
  std::int64_t iteration = 0;  // 1-based, across epochs
  int epoch = 0;               // 0-based
  double batch_loss = 0.0;
  Reader* reader = nullptr;
};

// Training-loop observer. Fires iff iteration % iter_interval == 0; running
// aggregates reset at epoch boundaries.
class Hook {
 public:
  enum class Kind { kLoss, kEval, kMisclassification };

  Hook(Kind kind, std::int64_t iter_interval);
  virtual ~Hook() = default;

  Kind kind() const { return kind_; }
  std::int64_t iter_interval() const { return iter_interval_; }

  void on_iteration(const HookContext& ctx);
  virtual void on_epoch_end(int epoch);

 protected:
  virtual void fire(const HookContext& ctx, double running_mean_loss) = 0;

 private:
  Kind kind_;
  std::int64_t iter_interval_;
  double loss_sum_ = 0.0;
  std::int64_t loss_count_ = 0;
};

class LossHook : public Hook {
 public:
  using Sink = std::function<void(std::int64_t iteration, double mean_loss)>;
  LossHook(std::int64_t iter_interval, Sink sink);
  std::int64_t fire_count() const { return fires_; }

 protected:
  void fire(const HookContext& ctx, double running_mean_loss) override;

 private:
  Sink sink_;
  std::int64_t fires_ = 0;
};

// Classification accuracy on a held-out set, evaluated in the train thread.
class EvalHook : public Hook {
 public:
  using Sink = std::function<void(std::int64_t iteration, double accuracy)>;
  EvalHook(std::int64_t iter_interval, corpus::Dataset dataset, Sink sink);

 protected:
  void fire(const HookContext& ctx, double running_mean_loss) override;

 private:
  corpus::Dataset dataset_;
  Sink sink_;
};

// Task-agnostic wrapper around the three modules: holds shared config,
// trains, answers, and round-trips through a save directory.
class Reader {
 public:
  Reader(std::shared_ptr<InputModule> input, std::shared_ptr<ModelModule> model,
         std::shared_ptr<OutputModule> output, ReaderConfig config);

  const ReaderConfig& config() const { return config_; }
  InputModule& input() { return *input_; }
  ModelModule& model() { return *model_; }
  OutputModule& output() { return *output_; }

  void setup(const corpus::Dataset& train);
  bool is_setup() const;

  TrainingReport train(const corpus::Dataset& dataset, const TrainOptions& options,
                       const std::vector<std::shared_ptr<Hook>>& hooks = {});

  std::vector<ReaderAnswer> answer(const std::vector<corpus::QASetting>& instances);

  bool is_classification() const { return output_->classification(); }

  // Directory layout: config.yaml, vocab.txt, arch.yaml, params.ckpt.
  void save(const std::string& dir) const;
  // Restores vocabulary and parameters into an assembled, unset-up reader.
  void restore(const std::string& dir);

 private:
  std::shared_ptr<InputModule> input_;
  std::shared_ptr<ModelModule> model_;
  std::shared_ptr<OutputModule> output_;
  ReaderConfig config_;
};

// Validates the port signature and returns the assembled reader. Throws
// PortMismatch naming the first unsatisfied port and the available producers.
Reader assemble(std::shared_ptr<InputModule> input,
                std::shared_ptr<ModelModule> model,
                std::shared_ptr<OutputModule> output, ReaderConfig config);

// Reader-level config file (config.yaml in a save directory).
void write_reader_config(const std::string& dir, const ReaderConfig& config);
ReaderConfig read_reader_config(const std::string& dir);

struct AnnotatedExample {
  corpus::QASetting instance;
  std::string prediction;
  double gold_probability = 0.0;
};

// Up to `limit` examples whose gold-candidate probability falls in [lo, hi].
// Requires a classification reader with candidate probabilities.
std::vector<AnnotatedExample> misclassification_report(Reader& reader,
                                                       const corpus::Dataset& dataset,
                                                       double lo, double hi,
                                                       std::size_t limit);

}  // namespace mrkit::core
