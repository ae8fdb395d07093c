// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/readers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mrkit::zoo {

using engine::Tensor;

TextInputModule::TextInputModule(TaskKind task, std::int64_t min_count)
    : task_(task), min_count_(min_count) {}

std::vector<core::TensorPort> TextInputModule::output_ports() const {
  return {core::ports::question(),      core::ports::question_mask(),
          core::ports::question_length(), core::ports::support(),
          core::ports::support_mask(),  core::ports::support_length(),
          core::ports::char_question(), core::ports::char_support()};
}

std::vector<core::TensorPort> TextInputModule::training_output_ports() const {
  if (task_ == TaskKind::kNli) return {core::ports::answer_idx()};
  return {core::ports::answer_start(), core::ports::answer_end()};
}

void TextInputModule::setup(const corpus::Dataset& train) {
  textpipe::Vocab vocab;
  for (const corpus::QASetting& inst : train.instances) {
    for (const auto& tok : textpipe::tokenize(inst.question)) vocab.observe(tok.text);
    for (const std::string& doc : inst.support) {
      for (const auto& tok : textpipe::tokenize(doc)) vocab.observe(tok.text);
    }
  }
  vocab.freeze(min_count_);
  vocab_ = std::move(vocab);
}

namespace {

// Gold candidate index for classification training.
std::int64_t gold_candidate_index(const corpus::Dataset& dataset, std::size_t i) {
  const corpus::QASetting& inst = dataset.instances[i];
  const auto* candidates = dataset.effective_candidates(i);
  if (candidates == nullptr || inst.answers.empty()) {
    throw Error(ErrorKind::kMalformedDocument,
                "training instance " + std::to_string(i) +
                    " lacks candidates or a gold answer");
  }
  const auto it = std::find(candidates->begin(), candidates->end(),
                            inst.answers[0].text);
  if (it == candidates->end()) {
    throw Error(ErrorKind::kMalformedDocument,
                "training instance " + std::to_string(i) + ": gold \"" +
                    inst.answers[0].text + "\" is not a candidate");
  }
  return it - candidates->begin();
}

// First gold answer with a usable span on support doc 0, as an inclusive
// token range. Nullopt when the instance cannot supply a training target.
std::optional<std::pair<std::int64_t, std::int64_t>> gold_token_span(
    const corpus::QASetting& inst) {
  if (inst.support.empty()) return std::nullopt;
  const auto tokens = textpipe::tokenize(inst.support[0]);
  if (tokens.empty()) return std::nullopt;
  for (const corpus::Answer& ans : inst.answers) {
    if (!ans.span.has_value() || ans.span->doc_index != 0) continue;
    const auto span =
        textpipe::token_span_for_chars(tokens, ans.span->char_start, ans.span->char_end);
    if (!span.has_value()) continue;
    if (static_cast<std::int64_t>(span->second - span->first) >= kMaxSpanTokens)
      continue;
    return std::make_pair(static_cast<std::int64_t>(span->first),
                          static_cast<std::int64_t>(span->second));
  }
  return std::nullopt;
}

}  // namespace

std::vector<textpipe::Batch> TextInputModule::batches(
    const corpus::Dataset& dataset, std::int64_t batch_size,
    std::optional<std::uint64_t> shuffle_seed, bool training) const {
  if (!training) {
    return textpipe::make_batches(dataset, vocab_, batch_size, shuffle_seed);
  }

  if (task_ == TaskKind::kNli) {
    auto result = textpipe::make_batches(dataset, vocab_, batch_size, shuffle_seed);
    for (auto& batch : result) {
      const std::int64_t b = static_cast<std::int64_t>(batch.instance_indices.size());
      Tensor labels = Tensor::zeros({b}, engine::DType::kI64);
      for (std::int64_t r = 0; r < b; ++r) {
        labels.i64()[r] = gold_candidate_index(
            dataset, batch.instance_indices[static_cast<std::size_t>(r)]);
      }
      batch.put("answer_idx", std::move(labels));
    }
    return result;
  }

  // QA: instances without a valid gold token span cannot drive the loss and
  // are dropped from the training view.
  corpus::Dataset usable;
  usable.meta = dataset.meta;
  std::vector<std::pair<std::int64_t, std::int64_t>> spans;
  for (const corpus::QASetting& inst : dataset.instances) {
    const auto span = gold_token_span(inst);
    if (span.has_value()) {
      usable.instances.push_back(inst);
      spans.push_back(*span);
    }
  }
  if (usable.instances.empty()) {
    throw Error(ErrorKind::kEmptyDataset,
                "no training instance carries a decodable gold span");
  }
  auto result = textpipe::make_batches(usable, vocab_, batch_size, shuffle_seed);
  for (auto& batch : result) {
    const std::int64_t b = static_cast<std::int64_t>(batch.instance_indices.size());
    Tensor starts = Tensor::zeros({b}, engine::DType::kI64);
    Tensor ends = Tensor::zeros({b}, engine::DType::kI64);
    for (std::int64_t r = 0; r < b; ++r) {
      const auto& span = spans[batch.instance_indices[static_cast<std::size_t>(r)]];
      starts.i64()[r] = span.first;
      ends.i64()[r] = span.second;
    }
    batch.put("answer_start", std::move(starts));
    batch.put("answer_end", std::move(ends));
  }
  return result;
}

std::vector<core::TensorPort> NliOutputModule::input_ports() const {
  return {core::ports::logits()};
}

std::vector<core::ReaderAnswer> NliOutputModule::produce(
    const std::vector<const corpus::QASetting*>& instances,
    const std::map<std::string, engine::Tensor>& tensors) const {
  const Tensor& logits = tensors.at("logits");
  const std::int64_t classes = logits.dim(1);
  std::vector<core::ReaderAnswer> answers;
  answers.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const double* row = logits.f64().data() + static_cast<std::int64_t>(i) * classes;
    double mx = row[0];
    for (std::int64_t c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(classes));
    for (std::int64_t c = 0; c < classes; ++c) {
      probs[static_cast<std::size_t>(c)] = std::exp(row[c] - mx);
      z += probs[static_cast<std::size_t>(c)];
    }
    std::size_t best = 0;
    for (std::size_t c = 0; c < probs.size(); ++c) {
      probs[c] /= z;
      if (probs[c] > probs[best]) best = c;
    }

    const std::vector<std::string>& labels =
        instances[i]->candidates.has_value() &&
                static_cast<std::int64_t>(instances[i]->candidates->size()) == classes
            ? *instances[i]->candidates
            : corpus::nli_labels();
    core::ReaderAnswer answer;
    answer.text = best < labels.size() ? labels[best] : std::to_string(best);
    answer.score = probs[best];
    answer.candidate_probs = std::move(probs);
    answers.push_back(std::move(answer));
  }
  return answers;
}

SpanPrediction decode_span(std::span<const double> start_scores,
                           std::span<const double> end_scores,
                           std::size_t length,
                           const std::vector<textpipe::Token>& tokens,
                           const std::string& support,
                           std::int64_t max_span_tokens) {
  const std::size_t n = std::min({length, start_scores.size(), tokens.size()});
  if (n == 0) {
    throw Error(ErrorKind::kNoValidSpan,
                "support has no tokens to extract a span from");
  }
  SpanPrediction best;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start < n; ++start) {
    const std::size_t window_end =
        std::min(n, start + static_cast<std::size_t>(max_span_tokens));
    for (std::size_t end = start; end < window_end; ++end) {
      const double score = start_scores[start] + end_scores[end];
      if (score > best_score) {
        best_score = score;
        best.start_token = start;
        best.end_token = end;
      }
    }
  }
  best.score = best_score;
  best.char_span = corpus::CharSpan{0, tokens[best.start_token].char_start,
                                    tokens[best.end_token].char_end};
  best.text = support.substr(
      static_cast<std::size_t>(best.char_span.char_start),
      static_cast<std::size_t>(best.char_span.char_end - best.char_span.char_start));
  return best;
}

std::vector<core::TensorPort> QaOutputModule::input_ports() const {
  return {core::ports::start_scores(), core::ports::end_scores(),
          core::ports::support_length()};
}

std::vector<core::ReaderAnswer> QaOutputModule::produce(
    const std::vector<const corpus::QASetting*>& instances,
    const std::map<std::string, engine::Tensor>& tensors) const {
  const Tensor& start_scores = tensors.at("start_scores");
  const Tensor& end_scores = tensors.at("end_scores");
  const Tensor& lengths = tensors.at("support_length");
  const std::int64_t width = start_scores.dim(1);

  std::vector<core::ReaderAnswer> answers;
  answers.reserve(instances.size());
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const corpus::QASetting& inst = *instances[i];
    const std::string support = inst.support.empty() ? "" : inst.support[0];
    const auto tokens = textpipe::tokenize(support);
    const auto row = static_cast<std::int64_t>(i);
    SpanPrediction pred = decode_span(
        std::span<const double>(start_scores.f64().data() + row * width,
                                static_cast<std::size_t>(width)),
        std::span<const double>(end_scores.f64().data() + row * width,
                                static_cast<std::size_t>(width)),
        static_cast<std::size_t>(lengths.i64()[row]), tokens, support);
    core::ReaderAnswer answer;
    answer.text = pred.text;
    answer.score = pred.score;
    answer.span = pred.char_span;
    answers.push_back(std::move(answer));
  }
  return answers;
}

namespace {

core::Reader build_reader(dsl::Task task, const std::string& arch_text,
                          core::ReaderConfig config) {
  config.task = dsl::task_name(task);
  config.arch_text = arch_text;
  dsl::ArchGraph graph = dsl::compile_arch(
      arch_text, task, {config.repr_dim, config.repr_dim_input});
  auto model = dsl::instantiate(std::move(graph));
  auto input = std::make_shared<TextInputModule>(
      task == dsl::Task::kNli ? TextInputModule::TaskKind::kNli
                              : TextInputModule::TaskKind::kQa);
  std::shared_ptr<core::OutputModule> output;
  if (task == dsl::Task::kNli) {
    output = std::make_shared<NliOutputModule>();
  } else {
    output = std::make_shared<QaOutputModule>();
  }
  return core::assemble(std::move(input), std::move(model), std::move(output),
                        std::move(config));
}

}  // namespace

core::Reader nli_reader(const std::string& arch_config_text,
                        core::ReaderConfig config) {
  return build_reader(dsl::Task::kNli, arch_config_text, std::move(config));
}

core::Reader qa_reader(const std::string& arch_config_text,
                       core::ReaderConfig config) {
  return build_reader(dsl::Task::kQa, arch_config_text, std::move(config));
}

core::Reader make_reader(core::ReaderConfig config) {
  const dsl::Task task = dsl::task_from_string(config.task);
  const std::string arch = config.arch_text;
  return build_reader(task, arch, std::move(config));
}

core::Reader load_reader(const std::string& dir) {
  core::ReaderConfig config = core::read_reader_config(dir);
  core::Reader reader = make_reader(std::move(config));
  reader.restore(dir);
  return reader;
}

double apply_pretrained_embeddings(core::Reader& reader, const std::string& path) {
  auto* model = dynamic_cast<dsl::DslModel*>(&reader.model());
  if (model == nullptr) {
    throw std::logic_error("reader model does not use word embeddings");
  }
  const textpipe::Vocab* vocab = reader.input().vocab();
  textpipe::EmbeddingTable table = textpipe::load_embeddings(
      path, *vocab, reader.config().repr_dim_input,
      derive_seed(reader.config().seed, "pretrained"));
  if (table.dim != reader.config().repr_dim_input) {
    throw Error(ErrorKind::kDimensionMismatch,
                "embedding file dimension " + std::to_string(table.dim) +
                    " does not match repr_dim_input " +
                    std::to_string(reader.config().repr_dim_input));
  }
  model->set_word_embeddings(std::move(table.table));
  return table.coverage;
}

}  // namespace mrkit::zoo
