// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entry points: convert, validate, train, evaluate, interact,
// inspect, arch check. Exit codes: 0 ok, 1 validation/compile failure,
// 2 I/O or format error. Diagnostics go to stderr, data to stdout.

#include <yaml-cpp/yaml.h>

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "mrkit/lp.hpp"
#include "mrkit/metrics.hpp"
#include "mrkit/readers.hpp"

namespace fs = std::filesystem;
using namespace mrkit;

namespace {

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedDocument:
    case ErrorKind::kMalformedLine:
    case ErrorKind::kSpanOutOfBounds:
    case ErrorKind::kSpanMismatch:
    case ErrorKind::kDimensionMismatch:
    case ErrorKind::kIoError:
      return 2;
    default:
      return 1;
  }
}

std::string single_line(const std::string& text) {
  std::string out = text;
  for (char& c : out) {
    if (c == '\n' || c == '\t' || c == '\r') c = ' ';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shared training configuration file.
// ---------------------------------------------------------------------------

struct TrainFileConfig {
  std::int64_t batch_size = 128;
  std::int64_t repr_dim = 128;
  std::int64_t repr_dim_input = 128;
  std::uint64_t seed = 1337;
  int epochs = 2;
  double lr = 1e-3;
  std::int64_t hook_interval = 10;
  std::string arch_path;
  std::string embeddings_path;
  // link prediction
  zoo::LpKind lp_kind = zoo::LpKind::kComplEx;
  std::int64_t lp_dim = 32;
  std::int64_t lp_negatives = 4;
};

TrainFileConfig read_train_config(const std::string& path) {
  YAML::Node node;
  try {
    node = YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    throw Error(ErrorKind::kParseError, path + ": " + e.what());
  }
  TrainFileConfig config;
  config.batch_size = node["batch_size"].as<std::int64_t>(config.batch_size);
  config.repr_dim = node["repr_dim"].as<std::int64_t>(config.repr_dim);
  config.repr_dim_input =
      node["repr_dim_input"].as<std::int64_t>(config.repr_dim_input);
  config.seed = node["seed"].as<std::uint64_t>(config.seed);
  config.epochs = node["epochs"].as<int>(config.epochs);
  config.lr = node["lr"].as<double>(config.lr);
  config.hook_interval = node["hook_interval"].as<std::int64_t>(config.hook_interval);
  if (node["arch"]) {
    fs::path arch = node["arch"].as<std::string>();
    if (arch.is_relative()) arch = fs::path(path).parent_path() / arch;
    config.arch_path = arch.string();
  }
  if (node["embeddings"]) {
    fs::path emb = node["embeddings"].as<std::string>();
    if (emb.is_relative()) emb = fs::path(path).parent_path() / emb;
    config.embeddings_path = emb.string();
  }
  if (node["lp"]) {
    const YAML::Node lp = node["lp"];
    if (lp["kind"]) config.lp_kind = zoo::lp_kind_from_string(lp["kind"].as<std::string>());
    config.lp_dim = lp["dim"].as<std::int64_t>(config.lp_dim);
    config.lp_negatives = lp["negatives"].as<std::int64_t>(config.lp_negatives);
  }
  return config;
}

// ---------------------------------------------------------------------------
// Subcommand bodies.
// ---------------------------------------------------------------------------

int cmd_convert(const std::string& from, const std::string& in_path,
                const std::string& out_path) {
  try {
    const std::string raw = corpus::read_text_file(in_path);
    corpus::ConvertStats stats;
    corpus::Dataset dataset;
    if (from == "squad") {
      dataset = corpus::convert_squad(raw, &stats);
    } else if (from == "snli") {
      dataset = corpus::convert_snli(raw, &stats);
    } else {
      auto converted = corpus::convert_triples(raw);
      dataset = std::move(converted.dataset);
      stats.converted = static_cast<std::int64_t>(dataset.instances.size());
    }
    corpus::save_dataset_file(out_path, dataset);
    std::cerr << "converted " << dataset.instances.size() << " instances";
    if (stats.dropped > 0) std::cerr << ", dropped " << stats.dropped;
    std::cerr << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }
}

int cmd_validate(const std::string& path) {
  try {
    corpus::Dataset dataset = corpus::load_dataset_file(path);
    std::int64_t answers = 0, spans = 0;
    for (const auto& inst : dataset.instances) {
      answers += static_cast<std::int64_t>(inst.answers.size());
      for (const auto& a : inst.answers) spans += a.span.has_value() ? 1 : 0;
    }
    std::cout << "instances " << dataset.instances.size() << "\n"
              << "answers " << answers << "\n"
              << "spans " << spans << "\n";
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
}

int cmd_train(const std::string& task, const std::string& config_path,
              const std::string& data_path, const std::string& save_dir,
              std::optional<std::uint64_t> seed_override) {
  TrainFileConfig file = read_train_config(config_path);
  if (seed_override.has_value()) file.seed = *seed_override;

  if (task == "lp") {
    corpus::TripleDataset data =
        corpus::convert_triples(corpus::read_text_file(data_path));
    zoo::LpTrainConfig config;
    config.kind = file.lp_kind;
    config.dim = file.lp_dim;
    config.negatives_per_positive = file.lp_negatives;
    config.epochs = file.epochs;
    config.seed = file.seed;
    config.batch_size = file.batch_size;
    config.adam.lr = file.lr;
    const std::int64_t interval = file.hook_interval;
    config.on_batch = [interval](std::int64_t iteration, double loss) {
      if (iteration % interval == 0) {
        std::cout << iteration << " " << loss << "\n";
      }
    };
    zoo::EmbeddingModel model = zoo::train_lp(data.store, config);
    zoo::save_lp(save_dir, model, data.store, config.seed);
    std::cerr << "saved " << save_dir << "\n";
    return 0;
  }

  if (file.arch_path.empty()) {
    throw Error(ErrorKind::kParseError,
                config_path + ": task " + task + " needs an \"arch\" entry");
  }
  core::ReaderConfig config;
  config.task = task;
  config.batch_size = file.batch_size;
  config.repr_dim = file.repr_dim;
  config.repr_dim_input = file.repr_dim_input;
  config.seed = file.seed;
  config.arch_text = corpus::read_text_file(file.arch_path);

  corpus::Dataset train = corpus::load_dataset_file(data_path);
  core::Reader reader = zoo::make_reader(config);
  reader.setup(train);
  if (!file.embeddings_path.empty()) {
    const double coverage =
        zoo::apply_pretrained_embeddings(reader, file.embeddings_path);
    std::cerr << "embedding coverage " << coverage << "\n";
  }

  auto hook = std::make_shared<core::LossHook>(
      file.hook_interval, [](std::int64_t iteration, double loss) {
        std::cout << iteration << " " << loss << "\n";
      });
  core::TrainOptions options;
  options.max_epochs = file.epochs;
  options.adam.lr = file.lr;
  reader.train(train, options, {hook});
  reader.save(save_dir);
  std::cerr << "saved " << save_dir << "\n";
  return 0;
}

std::string reader_task(const std::string& dir) {
  return core::read_reader_config(dir).task;
}

int cmd_evaluate(const std::string& load_dir, const std::string& data_path,
                 bool filtered) {
  const std::string task = reader_task(load_dir);
  std::vector<metrics::MetricReport> reports;

  if (task == "lp") {
    zoo::LpBundle bundle = zoo::load_lp(load_dir);
    corpus::ConvertStats stats;
    auto test = corpus::resolve_triples(
        bundle.store, corpus::read_text_file(data_path), &stats);
    if (stats.dropped > 0) {
      std::cerr << "skipped " << stats.dropped
                << " triples with unknown entities or relations\n";
    }
    if (test.empty()) {
      throw Error(ErrorKind::kEmptyResults, "no evaluable test triples");
    }
    // the filter set covers every known fact: training plus test triples
    corpus::TripleStore known = bundle.store;
    for (const auto& [s, p, o] : test) known.add_triple(s, p, o);
    std::vector<zoo::RankingResult> results;
    for (const auto& [s, p, o] : test) {
      results.push_back(zoo::rank_entities(
          bundle.model, known, {s, p, o, zoo::OpenSlot::kObject}, filtered));
      results.push_back(zoo::rank_entities(
          bundle.model, known, {s, p, o, zoo::OpenSlot::kSubject}, filtered));
    }
    auto values = zoo::ranking_metrics(results, {3, 10});
    const auto count = static_cast<std::int64_t>(results.size());
    reports.push_back({"mrr", values.at("mrr"), count});
    reports.push_back({"hits@3", values.at("hits@3"), count});
    reports.push_back({"hits@10", values.at("hits@10"), count});
  } else {
    core::Reader reader = zoo::load_reader(load_dir);
    corpus::Dataset data = corpus::load_dataset_file(data_path);
    auto answers = reader.answer(data.instances);
    if (task == "nli") {
      std::vector<std::string> predictions, golds;
      for (std::size_t i = 0; i < answers.size(); ++i) {
        if (data.instances[i].answers.empty()) continue;
        predictions.push_back(answers[i].text);
        golds.push_back(data.instances[i].answers[0].text);
      }
      reports.push_back({"accuracy", metrics::accuracy(predictions, golds),
                         static_cast<std::int64_t>(predictions.size())});
    } else {
      double f1_total = 0.0, em_total = 0.0;
      std::int64_t count = 0;
      for (std::size_t i = 0; i < answers.size(); ++i) {
        std::vector<std::string> golds;
        for (const auto& gold : data.instances[i].answers) golds.push_back(gold.text);
        if (golds.empty()) continue;
        const auto scores = metrics::span_f1_em(answers[i].text, golds);
        f1_total += scores.f1;
        em_total += scores.em;
        ++count;
      }
      if (count == 0) {
        throw Error(ErrorKind::kEmptyResults, "no instance carries gold answers");
      }
      reports.push_back({"f1", f1_total / static_cast<double>(count), count});
      reports.push_back({"exact_match", em_total / static_cast<double>(count), count});
    }
  }
  for (const auto& report : reports) {
    std::cout << metrics::format_report(report) << "\n";
  }
  return 0;
}

int cmd_interact(const std::string& load_dir) {
  const std::string task = reader_task(load_dir);

  if (task == "lp") {
    zoo::LpBundle bundle = zoo::load_lp(load_dir);
    std::string question;
    while (std::getline(std::cin, question)) {
      if (question.empty()) continue;
      // swallow the support block (always empty for lp)
      std::string line;
      while (std::getline(std::cin, line) && !line.empty()) {
      }
      const std::string sep = corpus::kLpSeparator;
      const auto first = question.find(sep);
      const auto second =
          first == std::string::npos ? first : question.find(sep, first + sep.size());
      if (second == std::string::npos) {
        std::cerr << "expected \"subject [SEP] predicate [SEP] ?\"\n";
        continue;
      }
      const std::string a = question.substr(0, first);
      const std::string b = question.substr(first + sep.size(), second - first - sep.size());
      const std::string c = question.substr(second + sep.size());
      const auto p = bundle.store.relation_id(b);
      if (!p) {
        std::cerr << "unknown relation " << b << "\n";
        continue;
      }
      const bool object_open = c == corpus::kLpPlaceholder;
      const auto fixed = bundle.store.entity_id(object_open ? a : c);
      if (!fixed) {
        std::cerr << "unknown entity " << (object_open ? a : c) << "\n";
        continue;
      }
      std::int64_t best = 0;
      double best_score = -std::numeric_limits<double>::infinity();
      for (std::int64_t e = 0; e < bundle.model.num_entities(); ++e) {
        const double s = object_open ? bundle.model.score(*fixed, *p, e)
                                     : bundle.model.score(e, *p, *fixed);
        if (s > best_score) {
          best_score = s;
          best = e;
        }
      }
      std::cout << bundle.store.entity_name(best) << "\t" << best_score << "\n"
                << std::flush;
    }
    return 0;
  }

  core::Reader reader = zoo::load_reader(load_dir);
  std::string question;
  while (std::getline(std::cin, question)) {
    if (question.empty()) continue;
    std::vector<std::string> support;
    std::string line;
    while (std::getline(std::cin, line) && !line.empty()) {
      support.push_back(line);
    }
    corpus::QASetting instance;
    instance.question = question;
    instance.support = support;
    auto answers = reader.answer({instance});
    const core::ReaderAnswer& answer = answers[0];
    std::cout << answer.text << "\t" << answer.score;
    if (answer.span.has_value()) {
      std::cout << "\t" << answer.span->char_start << "," << answer.span->char_end;
    }
    std::cout << "\n" << std::flush;
  }
  return 0;
}

int cmd_inspect(const std::string& load_dir, const std::string& data_path,
                double lo, double hi, std::int64_t limit) {
  core::Reader reader = zoo::load_reader(load_dir);
  corpus::Dataset data = corpus::load_dataset_file(data_path);
  auto report = core::misclassification_report(
      reader, data, lo, hi, static_cast<std::size_t>(limit));
  for (const auto& item : report) {
    std::cout << item.gold_probability << "\t"
              << single_line(item.instance.answers[0].text) << "\t"
              << single_line(item.prediction) << "\t"
              << single_line(item.instance.question) << "\t"
              << (item.instance.support.empty()
                      ? ""
                      : single_line(item.instance.support[0]))
              << "\n";
  }
  std::cerr << report.size() << " examples in [" << lo << ", " << hi << "]\n";
  return 0;
}

int cmd_arch_check(const std::string& path, const std::string& task,
                   std::int64_t repr_dim, std::int64_t repr_dim_input) {
  try {
    const std::string text = corpus::read_text_file(path);
    dsl::ArchGraph graph = dsl::compile_arch(
        text, dsl::task_from_string(task), {repr_dim, repr_dim_input});
    std::cout << graph.shape_table();
    return 0;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.kind() == ErrorKind::kIoError ? 2 : 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"machine reading toolkit: QA, NLI and link prediction as "
               "question answering"};
  app.require_subcommand(1);

  // convert
  auto* convert = app.add_subcommand("convert", "convert a dataset to the unified JSON format");
  std::string convert_from, convert_in, convert_out;
  convert->add_option("--from", convert_from, "source format")
      ->required()
      ->check(CLI::IsMember({"squad", "snli", "triples"}));
  convert->add_option("--in", convert_in, "input file")->required();
  convert->add_option("--out", convert_out, "output JSON file")->required();

  // validate
  auto* validate = app.add_subcommand("validate", "check a dataset file against the schema");
  std::string validate_path;
  validate->add_option("path", validate_path, "dataset JSON file")->required();

  // train
  auto* train = app.add_subcommand("train", "train a reader and save a checkpoint directory");
  std::string train_task, train_config, train_data, train_save;
  std::uint64_t train_seed = 0;
  bool train_seed_set = false;
  train->add_option("--task", train_task, "task")
      ->required()
      ->check(CLI::IsMember({"lp", "nli", "qa"}));
  train->add_option("--config", train_config, "training config file")->required();
  train->add_option("--data", train_data, "training data file")->required();
  train->add_option("--save", train_save, "output directory")->required();
  train->add_option("--seed", train_seed, "seed override")
      ->each([&](const std::string&) { train_seed_set = true; });

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "compute metrics for a saved reader");
  std::string eval_load, eval_data;
  bool eval_filtered = false;
  evaluate->add_option("--load", eval_load, "saved reader directory")->required();
  evaluate->add_option("--data", eval_data, "evaluation data file")->required();
  evaluate->add_flag("--filtered", eval_filtered,
                     "filtered ranking (link prediction only)");

  // interact
  auto* interact = app.add_subcommand(
      "interact", "REPL: question, support lines, blank line; prints the answer");
  std::string interact_load;
  interact->add_option("--load", interact_load, "saved reader directory")->required();

  // inspect
  auto* inspect = app.add_subcommand(
      "inspect", "list examples whose gold probability falls in [lo, hi]");
  std::string inspect_load, inspect_data;
  double inspect_lo = 0.0, inspect_hi = 0.2;
  std::int64_t inspect_limit = 10;
  inspect->add_option("--load", inspect_load, "saved reader directory")->required();
  inspect->add_option("--data", inspect_data, "data file")->required();
  inspect->add_option("--lo", inspect_lo, "interval lower bound");
  inspect->add_option("--hi", inspect_hi, "interval upper bound");
  inspect->add_option("--limit", inspect_limit, "maximum number of examples");

  // arch check
  auto* arch = app.add_subcommand("arch", "architecture config tools");
  arch->require_subcommand(1);
  auto* arch_check = arch->add_subcommand("check", "compile a config and print inferred shapes");
  std::string arch_path, arch_task;
  std::int64_t arch_repr_dim = 128, arch_repr_dim_input = 128;
  arch_check->add_option("path", arch_path, "architecture config file")->required();
  arch_check->add_option("--task", arch_task, "task")
      ->required()
      ->check(CLI::IsMember({"nli", "qa"}));
  arch_check->add_option("--repr-dim", arch_repr_dim, "hidden dimension");
  arch_check->add_option("--repr-dim-input", arch_repr_dim_input,
                         "embedding dimension");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*convert) return cmd_convert(convert_from, convert_in, convert_out);
    if (*validate) return cmd_validate(validate_path);
    if (*train) {
      return cmd_train(train_task, train_config, train_data, train_save,
                       train_seed_set ? std::optional<std::uint64_t>(train_seed)
                                      : std::nullopt);
    }
    if (*evaluate) return cmd_evaluate(eval_load, eval_data, eval_filtered);
    if (*interact) return cmd_interact(interact_load);
    if (*inspect) {
      return cmd_inspect(inspect_load, inspect_data, inspect_lo, inspect_hi,
                         inspect_limit);
    }
    if (*arch_check) {
      return cmd_arch_check(arch_path, arch_task, arch_repr_dim,
                            arch_repr_dim_input);
    }
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }
  return 0;
}
