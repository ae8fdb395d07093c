// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/reader.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <sstream>

#include "mrkit/checkpoint.hpp"

namespace mrkit::core {

namespace fs = std::filesystem;

Hook::Hook(Kind kind, std::int64_t iter_interval)
    : kind_(kind), iter_interval_(iter_interval) {
  if (iter_interval_ < 1) {
    throw Error(ErrorKind::kPortMismatch,
                "hook interval must be >= 1, got " + std::to_string(iter_interval_));
  }
}

void Hook::on_iteration(const HookContext& ctx) {
  loss_sum_ += ctx.batch_loss;
  ++loss_count_;
  if (ctx.iteration % iter_interval_ == 0) {
    fire(ctx, loss_sum_ / static_cast<double>(loss_count_));
  }
}

void Hook::on_epoch_end(int) {
  loss_sum_ = 0.0;
  loss_count_ = 0;
}

LossHook::LossHook(std::int64_t iter_interval, Sink sink)
    : Hook(Kind::kLoss, iter_interval), sink_(std::move(sink)) {}

void LossHook::fire(const HookContext& ctx, double running_mean_loss) {
  ++fires_;
  if (sink_) sink_(ctx.iteration, running_mean_loss);
}

EvalHook::EvalHook(std::int64_t iter_interval, corpus::Dataset dataset, Sink sink)
    : Hook(Kind::kEval, iter_interval),
      dataset_(std::move(dataset)),
      sink_(std::move(sink)) {}

void EvalHook::fire(const HookContext& ctx, double) {
  if (!ctx.reader || dataset_.instances.empty()) return;
  auto answers = ctx.reader->answer(dataset_.instances);
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    const auto& golds = dataset_.instances[i].answers;
    for (const auto& gold : golds) {
      if (gold.text == answers[i].text) {
        ++correct;
        break;
      }
    }
  }
  if (sink_) {
    sink_(ctx.iteration,
          static_cast<double>(correct) / static_cast<double>(answers.size()));
  }
}

namespace {

std::string port_list(const std::vector<TensorPort>& ports) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < ports.size(); ++i) {
    if (i) os << ", ";
    os << ports[i].name;
  }
  os << ']';
  return os.str();
}

void require_satisfied(const std::vector<TensorPort>& needed,
                       const std::vector<TensorPort>& available,
                       const std::string& consumer) {
  for (const TensorPort& want : needed) {
    const TensorPort* found = nullptr;
    for (const TensorPort& have : available) {
      if (have.name == want.name) {
        found = &have;
        break;
      }
    }
    if (found == nullptr) {
      throw Error(ErrorKind::kPortMismatch,
                  "port \"" + want.name + "\" required by " + consumer +
                      " has no producer; available: " + port_list(available));
    }
    if (!ports_compatible(*found, want)) {
      throw Error(ErrorKind::kPortMismatch,
                  "port \"" + want.name + "\" required by " + consumer +
                      " is produced with different dims or dtype");
    }
  }
}

}  // namespace

Reader::Reader(std::shared_ptr<InputModule> input,
               std::shared_ptr<ModelModule> model,
               std::shared_ptr<OutputModule> output, ReaderConfig config)
    : input_(std::move(input)),
      model_(std::move(model)),
      output_(std::move(output)),
      config_(std::move(config)) {}

Reader assemble(std::shared_ptr<InputModule> input,
                std::shared_ptr<ModelModule> model,
                std::shared_ptr<OutputModule> output, ReaderConfig config) {
  const auto input_out = input->output_ports();
  const auto input_train_out = input->training_output_ports();
  const auto model_out = model->output_ports();

  require_satisfied(model->input_ports(), input_out, "the model module");

  std::vector<TensorPort> downstream = input_out;
  downstream.insert(downstream.end(), model_out.begin(), model_out.end());
  require_satisfied(output->input_ports(), downstream, "the output module");

  std::vector<TensorPort> train_available = input_out;
  train_available.insert(train_available.end(), input_train_out.begin(),
                         input_train_out.end());
  require_satisfied(model->training_input_ports(), train_available,
                    "the training path");

  const auto train_out = model->training_output_ports();
  const auto loss_it =
      std::find_if(train_out.begin(), train_out.end(),
                   [](const TensorPort& p) { return p.name == "loss"; });
  if (loss_it == train_out.end() || !loss_it->dims.empty() ||
      loss_it->dtype != engine::DType::kF64) {
    throw Error(ErrorKind::kPortMismatch,
                "port \"loss\" must be a scalar f64 training output; got " +
                    port_list(train_out));
  }

  return Reader(std::move(input), std::move(model), std::move(output),
                std::move(config));
}

void Reader::setup(const corpus::Dataset& train) {
  input_->setup(train);
  const textpipe::Vocab* vocab = input_->vocab();
  if (vocab == nullptr) {
    throw std::logic_error("input module exposes no vocabulary");
  }
  model_->setup(*vocab, config_.seed);
}

bool Reader::is_setup() const { return input_->is_setup() && model_->is_setup(); }

TrainingReport Reader::train(const corpus::Dataset& dataset,
                             const TrainOptions& options,
                             const std::vector<std::shared_ptr<Hook>>& hooks) {
  if (!is_setup()) {
    throw std::logic_error("train called before setup");
  }
  if (dataset.instances.empty()) {
    throw Error(ErrorKind::kEmptyDataset, "train needs a nonempty dataset");
  }

  auto named_params = model_->parameters();
  std::vector<engine::Var> params;
  params.reserve(named_params.size());
  for (auto& [name, var] : named_params) params.push_back(var);

  engine::AdamOptimizer optimizer(options.adam);
  TrainingReport report;

  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    auto batches = input_->batches(dataset, config_.batch_size,
                                   config_.seed + static_cast<std::uint64_t>(epoch),
                                   /*training=*/true);
    double epoch_loss = 0.0;
    std::int64_t epoch_batches = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      engine::Tape tape;
      PortVars out = model_->forward(tape, batches[b], /*training=*/true);
      auto it = out.find("loss");
      if (it == out.end()) {
        throw Error(ErrorKind::kPortMismatch,
                    "training forward produced no \"loss\" port");
      }
      const double loss_value = it->second.value().scalar_value();
      if (!std::isfinite(loss_value)) {
        throw Error(ErrorKind::kNonFiniteLoss,
                    "epoch " + std::to_string(epoch) + ", batch " +
                        std::to_string(b) + ": loss is " +
                        std::to_string(loss_value));
      }
      tape.backward(it->second);
      optimizer.step(params);
      for (auto& p : params) p.zero_grad();

      epoch_loss += loss_value;
      ++epoch_batches;
      ++report.iterations;
      HookContext ctx{report.iterations, epoch, loss_value, this};
      for (const auto& hook : hooks) hook->on_iteration(ctx);
    }
    report.epoch_mean_loss.push_back(epoch_loss /
                                     static_cast<double>(epoch_batches));
    for (const auto& hook : hooks) hook->on_epoch_end(epoch);
  }
  return report;
}

std::vector<ReaderAnswer> Reader::answer(
    const std::vector<corpus::QASetting>& instances) {
  if (!is_setup()) {
    throw std::logic_error("answer called before setup");
  }
  corpus::Dataset view;
  view.meta = "inference";
  view.instances = instances;
  auto batches =
      input_->batches(view, config_.batch_size, std::nullopt, /*training=*/false);

  std::vector<ReaderAnswer> answers(instances.size());
  for (auto& batch : batches) {
    engine::Tape tape;
    PortVars computed = model_->forward(tape, batch, /*training=*/false);
    std::map<std::string, engine::Tensor> tensors = batch.tensors;
    for (auto& [name, var] : computed) tensors[name] = var.value();

    std::vector<const corpus::QASetting*> rows;
    rows.reserve(batch.instance_indices.size());
    for (std::size_t idx : batch.instance_indices)
      rows.push_back(&instances[idx]);
    auto batch_answers = output_->produce(rows, tensors);
    if (batch_answers.size() != rows.size()) {
      throw std::logic_error("output module returned a wrong-sized batch");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      answers[batch.instance_indices[i]] = std::move(batch_answers[i]);
    }
  }
  return answers;
}

void Reader::save(const std::string& dir) const {
  if (!is_setup()) {
    throw std::logic_error("save called before setup");
  }
  fs::create_directories(dir);
  write_reader_config(dir, config_);

  const textpipe::Vocab* vocab = input_->vocab();
  if (vocab != nullptr) {
    std::ostringstream os;
    for (const std::string& line : vocab->to_lines()) os << line << '\n';
    corpus::write_text_file((fs::path(dir) / "vocab.txt").string(), os.str());
  }
  corpus::write_text_file((fs::path(dir) / "arch.yaml").string(),
                          config_.arch_text);

  std::vector<engine::NamedTensor> tensors;
  auto model = const_cast<ModelModule*>(model_.get());
  for (auto& [name, var] : model->parameters()) {
    tensors.push_back({name, var.value()});
  }
  engine::write_checkpoint((fs::path(dir) / "params.ckpt").string(), tensors);
}

void Reader::restore(const std::string& dir) {
  const fs::path vocab_path = fs::path(dir) / "vocab.txt";
  if (!fs::exists(vocab_path)) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "missing file vocab.txt in " + dir);
  }
  std::istringstream in(corpus::read_text_file(vocab_path.string()));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  textpipe::Vocab vocab = textpipe::Vocab::from_lines(lines);
  input_->restore_vocab(vocab);
  model_->setup(vocab, config_.seed);

  const fs::path ckpt_path = fs::path(dir) / "params.ckpt";
  if (!fs::exists(ckpt_path)) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "missing file params.ckpt in " + dir);
  }
  auto stored = engine::read_checkpoint(ckpt_path.string());
  std::map<std::string, engine::Tensor*> by_name;
  for (auto& nt : stored) by_name[nt.name] = &nt.tensor;

  auto params = model_->parameters();
  if (params.size() != stored.size()) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "checkpoint holds " + std::to_string(stored.size()) +
                    " tensors, model needs " + std::to_string(params.size()));
  }
  for (auto& [name, var] : params) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  "checkpoint is missing parameter \"" + name + "\"");
    }
    if (it->second->shape() != var.value().shape()) {
      throw Error(ErrorKind::kCorruptCheckpoint,
                  "parameter \"" + name + "\" has shape " +
                      engine::shape_str(it->second->shape()) + ", expected " +
                      engine::shape_str(var.value().shape()));
    }
    var.value() = *it->second;
  }
}

void write_reader_config(const std::string& dir, const ReaderConfig& config) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << 1;
  out << YAML::Key << "task" << YAML::Value << config.task;
  out << YAML::Key << "batch_size" << YAML::Value << config.batch_size;
  out << YAML::Key << "repr_dim" << YAML::Value << config.repr_dim;
  out << YAML::Key << "repr_dim_input" << YAML::Value << config.repr_dim_input;
  out << YAML::Key << "seed" << YAML::Value << config.seed;
  out << YAML::EndMap;
  corpus::write_text_file((fs::path(dir) / "config.yaml").string(),
                          std::string(out.c_str()) + "\n");
}

ReaderConfig read_reader_config(const std::string& dir) {
  const fs::path path = fs::path(dir) / "config.yaml";
  if (!fs::exists(path)) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "missing file config.yaml in " + dir);
  }
  YAML::Node node;
  try {
    node = YAML::LoadFile(path.string());
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kCorruptCheckpoint,
                "config.yaml: " + std::string(e.what()));
  }
  if (!node["format_version"] || node["format_version"].as<int>() != 1) {
    throw Error(ErrorKind::kVersionMismatch,
                "config.yaml format_version is not 1");
  }
  ReaderConfig config;
  config.task = node["task"].as<std::string>("");
  config.batch_size = node["batch_size"].as<std::int64_t>(128);
  config.repr_dim = node["repr_dim"].as<std::int64_t>(128);
  config.repr_dim_input = node["repr_dim_input"].as<std::int64_t>(128);
  config.seed = node["seed"].as<std::uint64_t>(1);
  const fs::path arch = fs::path(dir) / "arch.yaml";
  if (fs::exists(arch)) {
    config.arch_text = corpus::read_text_file(arch.string());
  }
  return config;
}

std::vector<AnnotatedExample> misclassification_report(
    Reader& reader, const corpus::Dataset& dataset, double lo, double hi,
    std::size_t limit) {
  if (!reader.is_classification()) {
    throw Error(ErrorKind::kNotClassification,
                "misclassification reports need per-candidate probabilities");
  }
  if (!(0.0 <= lo && lo < hi && hi <= 1.0)) {
    throw Error(ErrorKind::kNotClassification,
                "interval must satisfy 0 <= lo < hi <= 1");
  }
  auto answers = reader.answer(dataset.instances);

  std::vector<AnnotatedExample> report;
  for (std::size_t i = 0; i < dataset.instances.size() && report.size() < limit;
       ++i) {
    const corpus::QASetting& inst = dataset.instances[i];
    const auto* candidates = dataset.effective_candidates(i);
    if (candidates == nullptr || inst.answers.empty()) continue;
    const auto gold_it = std::find(candidates->begin(), candidates->end(),
                                   inst.answers[0].text);
    if (gold_it == candidates->end()) continue;
    const std::size_t gold_idx =
        static_cast<std::size_t>(gold_it - candidates->begin());
    if (answers[i].candidate_probs.size() != candidates->size()) {
      throw Error(ErrorKind::kNotClassification,
                  "reader produced " +
                      std::to_string(answers[i].candidate_probs.size()) +
                      " probabilities for " + std::to_string(candidates->size()) +
                      " candidates");
    }
    const double p = answers[i].candidate_probs[gold_idx];
    if (lo <= p && p <= hi) {
      report.push_back({inst, answers[i].text, p});
    }
  }
  return report;
}

}  // namespace mrkit::core
