// Copyright 2026 The mrkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "mrkit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mrkit::corpus {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// The converters keep answer text byte-for-byte, so validation is literal
// substring equality; anything else (including off-by-one spans) is rejected.
bool span_text_matches(const std::string& doc, const CharSpan& span,
                       const std::string& text) {
  return doc.compare(static_cast<std::size_t>(span.char_start),
                     static_cast<std::size_t>(span.char_end - span.char_start),
                     text) == 0;
}

std::vector<std::string> parse_candidate_list(const json& arr, const char* where) {
  std::vector<std::string> out;
  for (const auto& c : arr) {
    if (c.is_string()) {
      out.push_back(c.get<std::string>());
    } else if (c.is_object() && c.contains("text") && c["text"].is_string()) {
      out.push_back(c["text"].get<std::string>());
    } else {
      throw Error(ErrorKind::kMalformedDocument,
                  std::string(where) + ": candidate entries must be strings "
                                       "or objects with a \"text\" field");
    }
  }
  return out;
}

void validate_instance(const QASetting& qa, std::size_t index,
                       const std::vector<std::string>* candidates) {
  if (qa.question.empty()) {
    throw Error(ErrorKind::kMalformedDocument,
                "instance " + std::to_string(index) + ": empty question");
  }
  for (const Answer& ans : qa.answers) {
    if (ans.span.has_value()) {
      const CharSpan& sp = *ans.span;
      auto fail = [&](const std::string& why) {
        throw Error(ErrorKind::kSpanOutOfBounds,
                    "instance " + std::to_string(index) + ": " + why);
      };
      if (sp.doc_index < 0 ||
          sp.doc_index >= static_cast<std::int64_t>(qa.support.size())) {
        fail("span doc index " + std::to_string(sp.doc_index) + " with " +
             std::to_string(qa.support.size()) + " support docs");
      }
      const std::string& doc = qa.support[static_cast<std::size_t>(sp.doc_index)];
      if (sp.char_start < 0 || sp.char_start >= sp.char_end ||
          sp.char_end > static_cast<std::int64_t>(doc.size())) {
        fail("span [" + std::to_string(sp.char_start) + ", " +
             std::to_string(sp.char_end) + ") outside document of length " +
             std::to_string(doc.size()));
      }
      if (!span_text_matches(doc, sp, ans.text)) {
        fail("span [" + std::to_string(sp.char_start) + ", " +
             std::to_string(sp.char_end) + ") does not cover the answer text");
      }
    }
    if (candidates != nullptr && !ans.text.empty()) {
      bool found = false;
      for (const auto& c : *candidates) found = found || c == ans.text;
      if (!found) {
        throw Error(ErrorKind::kMalformedDocument,
                    "instance " + std::to_string(index) + ": answer \"" +
                        ans.text + "\" is not among the candidates");
      }
    }
  }
}

}  // namespace

Dataset load_dataset_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, e.what());
  }
  if (!j.is_object() || !j.contains("instances") || !j["instances"].is_array() ||
      !j.contains("meta") || !j["meta"].is_string()) {
    throw Error(ErrorKind::kMalformedDocument,
                "top level must be an object with \"instances\" and \"meta\"");
  }

  Dataset ds;
  ds.meta = j["meta"].get<std::string>();
  if (j.contains("globals")) {
    if (!j["globals"].is_object() || !j["globals"].contains("candidates") ||
        !j["globals"]["candidates"].is_array()) {
      throw Error(ErrorKind::kMalformedDocument,
                  "\"globals\" must hold a \"candidates\" array");
    }
    ds.global_candidates = parse_candidate_list(j["globals"]["candidates"], "globals");
  }

  for (const auto& inst : j["instances"]) {
    if (!inst.is_object() || !inst.contains("questions") ||
        !inst["questions"].is_array()) {
      throw Error(ErrorKind::kMalformedDocument,
                  "each instance needs a \"questions\" array");
    }
    std::vector<std::string> support;
    if (inst.contains("support")) {
      if (!inst["support"].is_array()) {
        throw Error(ErrorKind::kMalformedDocument, "\"support\" must be an array");
      }
      for (const auto& s : inst["support"]) {
        if (!s.is_string()) {
          throw Error(ErrorKind::kMalformedDocument, "support entries must be strings");
        }
        support.push_back(s.get<std::string>());
      }
    }
    for (const auto& q : inst["questions"]) {
      if (!q.is_object() || !q.contains("question") || !q["question"].is_string()) {
        throw Error(ErrorKind::kMalformedDocument,
                    "each question needs a \"question\" string");
      }
      QASetting qa;
      qa.question = q["question"].get<std::string>();
      qa.support = support;
      if (q.contains("candidates")) {
        if (!q["candidates"].is_array()) {
          throw Error(ErrorKind::kMalformedDocument, "\"candidates\" must be an array");
        }
        qa.candidates = parse_candidate_list(q["candidates"], "question");
      }
      if (q.contains("answers")) {
        if (!q["answers"].is_array()) {
          throw Error(ErrorKind::kMalformedDocument, "\"answers\" must be an array");
        }
        for (const auto& a : q["answers"]) {
          if (!a.is_object() || !a.contains("text") || !a["text"].is_string()) {
            throw Error(ErrorKind::kMalformedDocument,
                        "each answer needs a \"text\" string");
          }
          Answer ans;
          ans.text = a["text"].get<std::string>();
          if (a.contains("span")) {
            const auto& sp = a["span"];
            if (!sp.is_array() || (sp.size() != 2 && sp.size() != 3) ||
                !std::all_of(sp.begin(), sp.end(),
                             [](const json& v) { return v.is_number_integer(); })) {
              throw Error(ErrorKind::kMalformedDocument,
                          "\"span\" must be [start, end] or [doc, start, end]");
            }
            CharSpan span;
            if (sp.size() == 2) {
              span = {0, sp[0].get<std::int64_t>(), sp[1].get<std::int64_t>()};
            } else {
              span = {sp[0].get<std::int64_t>(), sp[1].get<std::int64_t>(),
                      sp[2].get<std::int64_t>()};
            }
            ans.span = span;
          }
          qa.answers.push_back(std::move(ans));
        }
      }
      ds.instances.push_back(std::move(qa));
    }
  }

  for (std::size_t i = 0; i < ds.instances.size(); ++i) {
    validate_instance(ds.instances[i], i, ds.effective_candidates(i));
  }
  return ds;
}

std::string serialize_dataset_json(const Dataset& dataset) {
  ordered_json root;
  root["instances"] = ordered_json::array();
  for (const QASetting& qa : dataset.instances) {
    ordered_json q;
    q["question"] = qa.question;
    q["answers"] = ordered_json::array();
    for (const Answer& ans : qa.answers) {
      ordered_json a;
      a["text"] = ans.text;
      if (ans.span.has_value()) {
        a["span"] = {ans.span->doc_index, ans.span->char_start, ans.span->char_end};
      }
      q["answers"].push_back(std::move(a));
    }
    if (qa.candidates.has_value()) {
      q["candidates"] = *qa.candidates;
    }
    ordered_json inst;
    inst["questions"] = ordered_json::array({std::move(q)});
    inst["support"] = qa.support;
    root["instances"].push_back(std::move(inst));
  }
  root["meta"] = dataset.meta;
  if (dataset.global_candidates.has_value()) {
    root["globals"] = ordered_json{{"candidates", *dataset.global_candidates}};
  }
  return root.dump(2) + "\n";
}

Dataset load_dataset_file(const std::string& path) {
  return load_dataset_json(read_text_file(path));
}

void save_dataset_file(const std::string& path, const Dataset& dataset) {
  write_text_file(path, serialize_dataset_json(dataset));
}

Dataset convert_squad(const std::string& squad_json, ConvertStats* stats) {
  json j;
  try {
    j = json::parse(squad_json);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kMalformedDocument, e.what());
  }
  if (!j.is_object() || !j.contains("data") || !j["data"].is_array()) {
    throw Error(ErrorKind::kMalformedDocument, "expected a \"data\" array");
  }

  Dataset ds;
  ds.meta = "squad";
  for (const auto& article : j["data"]) {
    if (!article.contains("paragraphs") || !article["paragraphs"].is_array()) {
      throw Error(ErrorKind::kMalformedDocument,
                  "each article needs a \"paragraphs\" array");
    }
    for (const auto& para : article["paragraphs"]) {
      if (!para.contains("context") || !para["context"].is_string() ||
          !para.contains("qas") || !para["qas"].is_array()) {
        throw Error(ErrorKind::kMalformedDocument,
                    "each paragraph needs \"context\" and \"qas\"");
      }
      const std::string context = para["context"].get<std::string>();
      for (const auto& qa_json : para["qas"]) {
        if (!qa_json.contains("question") || !qa_json["question"].is_string() ||
            !qa_json.contains("answers") || !qa_json["answers"].is_array()) {
          throw Error(ErrorKind::kMalformedDocument,
                      "each qa needs \"question\" and \"answers\"");
        }
        QASetting qa;
        qa.question = qa_json["question"].get<std::string>();
        qa.support = {context};
        bool spans_ok = true;
        for (const auto& a : qa_json["answers"]) {
          if (!a.contains("text") || !a["text"].is_string() ||
              !a.contains("answer_start") || !a["answer_start"].is_number_integer()) {
            throw Error(ErrorKind::kMalformedDocument,
                        "each answer needs \"text\" and \"answer_start\"");
          }
          Answer ans;
          ans.text = a["text"].get<std::string>();
          const std::int64_t start = a["answer_start"].get<std::int64_t>();
          const std::int64_t end = start + static_cast<std::int64_t>(ans.text.size());
          ans.span = CharSpan{0, start, end};
          if (start < 0 || end > static_cast<std::int64_t>(context.size()) ||
              !span_text_matches(context, *ans.span, ans.text)) {
            spans_ok = false;
            break;
          }
          qa.answers.push_back(std::move(ans));
        }
        if (!spans_ok) {
          if (stats) ++stats->dropped;
          continue;
        }
        if (stats) ++stats->converted;
        ds.instances.push_back(std::move(qa));
      }
    }
  }
  return ds;
}

Dataset convert_snli(const std::string& jsonl, ConvertStats* stats) {
  Dataset ds;
  ds.meta = "snli";
  std::istringstream in(jsonl);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) + ": " + e.what());
    }
    auto field = [&](const char* name) -> std::string {
      if (!j.contains(name) || !j[name].is_string()) {
        throw Error(ErrorKind::kMalformedLine,
                    "line " + std::to_string(line_no) + ": missing \"" +
                        name + "\"");
      }
      return j[name].get<std::string>();
    };
    const std::string premise = field("sentence1");
    const std::string hypothesis = field("sentence2");
    const std::string label = field("gold_label");
    if (label == "-") {
      if (stats) ++stats->dropped;
      continue;
    }
    const auto& labels = nli_labels();
    if (std::find(labels.begin(), labels.end(), label) == labels.end()) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) + ": unknown gold label \"" +
                      label + "\"");
    }
    QASetting qa;
    qa.question = hypothesis;
    qa.support = {premise};
    qa.candidates = labels;
    qa.answers = {Answer{label, std::nullopt}};
    ds.instances.push_back(std::move(qa));
    if (stats) ++stats->converted;
  }
  return ds;
}

std::int64_t TripleStore::add_entity(const std::string& name) {
  auto it = entity_ids_.find(name);
  if (it != entity_ids_.end()) return it->second;
  const std::int64_t id = num_entities();
  entity_ids_.emplace(name, id);
  entities_.push_back(name);
  return id;
}

std::int64_t TripleStore::add_relation(const std::string& name) {
  auto it = relation_ids_.find(name);
  if (it != relation_ids_.end()) return it->second;
  const std::int64_t id = num_relations();
  relation_ids_.emplace(name, id);
  relations_.push_back(name);
  return id;
}

void TripleStore::check_ids(std::int64_t s, std::int64_t p, std::int64_t o) const {
  if (s < 0 || s >= num_entities() || o < 0 || o >= num_entities() || p < 0 ||
      p >= num_relations()) {
    throw Error(ErrorKind::kIdOutOfRange,
                "triple (" + std::to_string(s) + ", " + std::to_string(p) +
                    ", " + std::to_string(o) + ") with " +
                    std::to_string(num_entities()) + " entities, " +
                    std::to_string(num_relations()) + " relations");
  }
}

bool TripleStore::add_triple(std::int64_t s, std::int64_t p, std::int64_t o) {
  check_ids(s, p, o);
  if (!triples_.insert({s, p, o}).second) return false;
  sp_to_o_[{s, p}].insert(o);
  po_to_s_[{p, o}].insert(s);
  return true;
}

std::optional<std::int64_t> TripleStore::entity_id(const std::string& name) const {
  auto it = entity_ids_.find(name);
  if (it == entity_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::int64_t> TripleStore::relation_id(const std::string& name) const {
  auto it = relation_ids_.find(name);
  if (it == relation_ids_.end()) return std::nullopt;
  return it->second;
}

const std::string& TripleStore::entity_name(std::int64_t id) const {
  if (id < 0 || id >= num_entities()) {
    throw Error(ErrorKind::kIdOutOfRange, "entity id " + std::to_string(id));
  }
  return entities_[static_cast<std::size_t>(id)];
}

const std::string& TripleStore::relation_name(std::int64_t id) const {
  if (id < 0 || id >= num_relations()) {
    throw Error(ErrorKind::kIdOutOfRange, "relation id " + std::to_string(id));
  }
  return relations_[static_cast<std::size_t>(id)];
}

bool TripleStore::contains(std::int64_t s, std::int64_t p, std::int64_t o) const {
  return triples_.contains({s, p, o});
}

const std::set<std::int64_t>& TripleStore::objects_of(std::int64_t s,
                                                      std::int64_t p) const {
  static const std::set<std::int64_t> kEmpty;
  auto it = sp_to_o_.find({s, p});
  return it == sp_to_o_.end() ? kEmpty : it->second;
}

const std::set<std::int64_t>& TripleStore::subjects_of(std::int64_t p,
                                                       std::int64_t o) const {
  static const std::set<std::int64_t> kEmpty;
  auto it = po_to_s_.find({p, o});
  return it == po_to_s_.end() ? kEmpty : it->second;
}

namespace {

struct RawTriple {
  std::string s, p, o;
};

std::vector<RawTriple> parse_tsv(const std::string& tsv) {
  std::vector<RawTriple> out;
  std::istringstream in(tsv);
  std::string line;
  std::int64_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t pos = 0;
    while (true) {
      const std::size_t tab = line.find('\t', pos);
      fields.push_back(line.substr(pos, tab == std::string::npos
                                            ? std::string::npos
                                            : tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw Error(ErrorKind::kMalformedLine,
                  "line " + std::to_string(line_no) +
                      ": expected subject<TAB>predicate<TAB>object");
    }
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

}  // namespace

TripleDataset convert_triples(const std::string& tsv) {
  TripleDataset result;
  result.dataset.meta = "triples";

  std::vector<TripleStore::Triple> ordered;
  for (const RawTriple& raw : parse_tsv(tsv)) {
    const std::int64_t s = result.store.add_entity(raw.s);
    const std::int64_t p = result.store.add_relation(raw.p);
    const std::int64_t o = result.store.add_entity(raw.o);
    if (result.store.add_triple(s, p, o)) ordered.push_back({s, p, o});
  }

  result.dataset.global_candidates = result.store.entities();
  for (const auto& [s, p, o] : ordered) {
    const std::string& sn = result.store.entity_name(s);
    const std::string& pn = result.store.relation_name(p);
    const std::string& on = result.store.entity_name(o);
    QASetting forward;
    forward.question = sn + kLpSeparator + pn + kLpSeparator + kLpPlaceholder;
    forward.answers = {Answer{on, std::nullopt}};
    result.dataset.instances.push_back(std::move(forward));
    QASetting backward;
    backward.question = std::string(kLpPlaceholder) + kLpSeparator + pn +
                        kLpSeparator + on;
    backward.answers = {Answer{sn, std::nullopt}};
    result.dataset.instances.push_back(std::move(backward));
  }
  return result;
}

std::vector<TripleStore::Triple> resolve_triples(const TripleStore& store,
                                                 const std::string& tsv,
                                                 ConvertStats* stats) {
  std::vector<TripleStore::Triple> out;
  for (const RawTriple& raw : parse_tsv(tsv)) {
    const auto s = store.entity_id(raw.s);
    const auto p = store.relation_id(raw.p);
    const auto o = store.entity_id(raw.o);
    if (!s || !p || !o) {
      if (stats) ++stats->dropped;
      continue;
    }
    if (stats) ++stats->converted;
    out.push_back({*s, *p, *o});
  }
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::kIoError, "cannot read " + path);
  }
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::kIoError, "cannot write " + path);
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace mrkit::corpus
