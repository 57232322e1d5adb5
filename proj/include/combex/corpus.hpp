#pragma once

// Data model for sentence-indexed annotated abstracts: drug spans inside a
// designated target sentence, gold relation sets over those spans, JSONL
// ingestion with per-line diagnostics, and [SEP]-delimited context windows.

#include <cstddef>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "combex/tokenizer.hpp"

namespace combex {

enum class Label { Pos, Comb, Nocomb, NonPos, AnyComb };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::Pos: return "POS";
    case Label::Comb: return "COMB";
    case Label::Nocomb: return "NOCOMB";
    case Label::NonPos: return "NON-POS";
    case Label::AnyComb: return "ANY-COMB";
  }
  return "?";
}

inline std::optional<Label> parse_label(const std::string& s) {
  if (s == "POS") return Label::Pos;
  if (s == "COMB") return Label::Comb;
  if (s == "NOCOMB") return Label::Nocomb;
  if (s == "NON-POS" || s == "NON_POS") return Label::NonPos;
  if (s == "ANY-COMB" || s == "ANY_COMB") return Label::AnyComb;
  return std::nullopt;
}

inline const char* label_token(Label l) {
  switch (l) {
    case Label::Pos: return special::kPos;
    case Label::Comb: return special::kComb;
    case Label::Nocomb: return special::kNocomb;
    case Label::NonPos: return special::kNonPos;
    case Label::AnyComb: return special::kAnyComb;
  }
  return "?";
}

// Character span of one drug mention in the target sentence, [start, end).
struct DrugSpan {
  int start = 0;
  int end = 0;
  std::string text;
};

// Indices into Instance::drugs, kept in the order they were provided.
// Set semantics (no duplicates) are enforced by validate_instance.
struct Combination {
  std::vector<int> drug_indices;

  std::vector<int> sorted() const {
    std::vector<int> s = drug_indices;
    std::sort(s.begin(), s.end());
    return s;
  }
};

struct Relation {
  Combination combo;
  Label label = Label::Pos;
};

struct RelationSet {
  std::vector<Relation> relations;

  bool contains(const std::vector<int>& sorted_indices, Label label) const {
    for (const auto& r : relations) {
      if (r.label == label && r.combo.sorted() == sorted_indices) return true;
    }
    return false;
  }
};

struct Instance {
  std::string doc_id;
  std::vector<std::string> sentences;
  int target_index = 0;  // 0-based internally; the JSONL field is 1-based
  std::vector<DrugSpan> drugs;
  RelationSet gold;

  const std::string& target_sentence() const {
    return sentences.at(static_cast<std::size_t>(target_index));
  }
};

struct WindowConfig {
  int n_ctx = 0;
};

enum class IssueCode {
  TooFewDrugs,
  BadTargetIndex,
  SpanOutOfRange,
  SpanTextMismatch,
  BadDrugIndex,
  CombinationTooSmall,
  DuplicateDrugInCombination,
  DuplicateDrugSet,
  NocombNotSingleton,
  NocombNotFullSet,
  BadGoldLabel,
};

inline const char* issue_name(IssueCode c) {
  switch (c) {
    case IssueCode::TooFewDrugs: return "TooFewDrugs";
    case IssueCode::BadTargetIndex: return "BadTargetIndex";
    case IssueCode::SpanOutOfRange: return "SpanOutOfRange";
    case IssueCode::SpanTextMismatch: return "SpanTextMismatch";
    case IssueCode::BadDrugIndex: return "BadDrugIndex";
    case IssueCode::CombinationTooSmall: return "CombinationTooSmall";
    case IssueCode::DuplicateDrugInCombination: return "DuplicateDrugInCombination";
    case IssueCode::DuplicateDrugSet: return "DuplicateDrugSet";
    case IssueCode::NocombNotSingleton: return "NocombNotSingleton";
    case IssueCode::NocombNotFullSet: return "NocombNotFullSet";
    case IssueCode::BadGoldLabel: return "BadGoldLabel";
  }
  return "?";
}

struct ValidationIssue {
  IssueCode code;
  std::string detail;
};

inline std::vector<ValidationIssue> validate_instance(const Instance& inst) {
  std::vector<ValidationIssue> issues;
  auto add = [&](IssueCode c, const std::string& d) { issues.push_back({c, d}); };

  if (inst.drugs.size() < 2) {
    add(IssueCode::TooFewDrugs, "instance needs at least 2 drug spans");
  }
  if (inst.target_index < 0 ||
      inst.target_index >= static_cast<int>(inst.sentences.size())) {
    add(IssueCode::BadTargetIndex, "target_index outside the abstract");
    return issues;  // span checks need a target sentence
  }
  const std::string& sent = inst.target_sentence();
  for (std::size_t i = 0; i < inst.drugs.size(); ++i) {
    const DrugSpan& d = inst.drugs[i];
    if (d.start < 0 || d.start >= d.end ||
        d.end > static_cast<int>(sent.size())) {
      add(IssueCode::SpanOutOfRange,
          "drug " + std::to_string(i) + " span [" + std::to_string(d.start) +
              "," + std::to_string(d.end) + ") out of range");
      continue;
    }
    if (sent.compare(d.start, static_cast<std::size_t>(d.end - d.start), d.text) != 0) {
      add(IssueCode::SpanTextMismatch,
          "drug " + std::to_string(i) + " text does not match the sentence substring");
    }
  }

  std::set<std::vector<int>> seen_sets;
  const int m = static_cast<int>(inst.drugs.size());
  for (std::size_t r = 0; r < inst.gold.relations.size(); ++r) {
    const Relation& rel = inst.gold.relations[r];
    if (rel.label != Label::Pos && rel.label != Label::Comb &&
        rel.label != Label::Nocomb) {
      add(IssueCode::BadGoldLabel,
          "relation " + std::to_string(r) + " uses a non-gold label");
    }
    bool index_ok = true;
    std::set<int> uniq;
    for (int idx : rel.combo.drug_indices) {
      if (idx < 0 || idx >= m) {
        add(IssueCode::BadDrugIndex,
            "relation " + std::to_string(r) + " references drug " + std::to_string(idx));
        index_ok = false;
        continue;
      }
      if (!uniq.insert(idx).second) {
        add(IssueCode::DuplicateDrugInCombination,
            "relation " + std::to_string(r) + " repeats drug " + std::to_string(idx));
      }
    }
    if (uniq.size() < 2) {
      add(IssueCode::CombinationTooSmall,
          "relation " + std::to_string(r) + " has fewer than 2 distinct drugs");
    }
    if (index_ok) {
      std::vector<int> key(uniq.begin(), uniq.end());
      if (!seen_sets.insert(key).second) {
        add(IssueCode::DuplicateDrugSet,
            "relation " + std::to_string(r) + " repeats an earlier drug set");
      }
    }
  }

  for (std::size_t r = 0; r < inst.gold.relations.size(); ++r) {
    if (inst.gold.relations[r].label != Label::Nocomb) continue;
    if (inst.gold.relations.size() != 1) {
      add(IssueCode::NocombNotSingleton, "NOCOMB must be the only relation");
    }
    std::set<int> uniq(inst.gold.relations[r].combo.drug_indices.begin(),
                       inst.gold.relations[r].combo.drug_indices.end());
    if (static_cast<int>(uniq.size()) != m) {
      add(IssueCode::NocombNotFullSet, "NOCOMB must cover every drug in the sentence");
    }
  }
  return issues;
}

// Up to n_ctx sentences either side of the target, the target itself wrapped
// in [SEP] markers, everything joined by single spaces. Truncation at the
// abstract boundary is silent.
inline std::string window(const Instance& inst, const WindowConfig& cfg) {
  std::vector<std::string> parts;
  const int n = static_cast<int>(inst.sentences.size());
  const int lo = std::max(0, inst.target_index - cfg.n_ctx);
  const int hi = std::min(n - 1, inst.target_index + cfg.n_ctx);
  for (int i = lo; i < inst.target_index; ++i) parts.push_back(inst.sentences[i]);
  parts.push_back(special::kSep);
  parts.push_back(inst.target_sentence());
  parts.push_back(special::kSep);
  for (int i = inst.target_index + 1; i <= hi; ++i) parts.push_back(inst.sentences[i]);
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += ' ';
    out += parts[i];
  }
  return out;
}

struct LoadDiagnostic {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<Instance> instances;
  std::vector<LoadDiagnostic> diagnostics;
};

enum class CorpusFormat { Jsonl };

inline nlohmann::json instance_to_json(const Instance& inst) {
  nlohmann::json j;
  j["doc_id"] = inst.doc_id;
  j["sentences"] = inst.sentences;
  j["target_index"] = inst.target_index + 1;  // external form is 1-based
  j["drugs"] = nlohmann::json::array();
  for (const auto& d : inst.drugs) {
    j["drugs"].push_back({{"start", d.start}, {"end", d.end}, {"text", d.text}});
  }
  j["relations"] = nlohmann::json::array();
  for (const auto& r : inst.gold.relations) {
    j["relations"].push_back(
        {{"drug_indices", r.combo.drug_indices}, {"label", label_name(r.label)}});
  }
  return j;
}

inline Instance instance_from_json(const nlohmann::json& j) {
  Instance inst;
  inst.doc_id = j.at("doc_id").get<std::string>();
  inst.sentences = j.at("sentences").get<std::vector<std::string>>();
  inst.target_index = j.at("target_index").get<int>() - 1;
  for (const auto& dj : j.at("drugs")) {
    DrugSpan d;
    d.start = dj.at("start").get<int>();
    d.end = dj.at("end").get<int>();
    d.text = dj.at("text").get<std::string>();
    inst.drugs.push_back(std::move(d));
  }
  for (const auto& rj : j.at("relations")) {
    Relation r;
    r.combo.drug_indices = rj.at("drug_indices").get<std::vector<int>>();
    auto lab = parse_label(rj.at("label").get<std::string>());
    if (!lab) throw std::runtime_error("unknown label: " + rj.at("label").get<std::string>());
    r.label = *lab;
    inst.gold.relations.push_back(std::move(r));
  }
  return inst;
}

inline LoadResult load_corpus_stream(std::istream& in) {
  LoadResult result;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Instance inst;
    try {
      inst = instance_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      result.diagnostics.push_back({line_no, e.what()});
      continue;
    }
    auto issues = validate_instance(inst);
    if (!issues.empty()) {
      std::string msg = inst.doc_id + ":";
      for (const auto& is : issues) {
        msg += " [";
        msg += issue_name(is.code);
        msg += "] " + is.detail + ";";
      }
      result.diagnostics.push_back({line_no, msg});
      continue;
    }
    result.instances.push_back(std::move(inst));
  }
  return result;
}

inline LoadResult load_corpus(const std::string& path,
                              CorpusFormat format = CorpusFormat::Jsonl) {
  (void)format;  // Jsonl is the only wire format
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);
  return load_corpus_stream(in);
}

inline void save_corpus(const std::vector<Instance>& instances, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  for (const auto& inst : instances) {
    out << instance_to_json(inst).dump() << '\n';
  }
}

// Vocabulary over every sentence in the corpus (so any window size is
// covered) plus the reserved special block.
inline Vocab build_corpus_vocab(const std::vector<Instance>& corpus) {
  if (corpus.empty()) throw std::invalid_argument("cannot build a vocab from an empty corpus");
  std::vector<std::vector<Token>> seqs;
  seqs.reserve(corpus.size());
  for (const auto& inst : corpus) {
    for (const auto& s : inst.sentences) seqs.push_back(tokenize(s));
  }
  return Vocab::build(seqs);
}

}  // namespace combex
