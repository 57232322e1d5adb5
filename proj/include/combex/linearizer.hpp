#pragma once

// Bidirectional codec between relation sets and linearized token sequences.
//
// Flat schemas serialize each combination as drug tokens each followed by the
// entity separator, then one label token:
//
//   flat_seq := relation+ EOS
//   relation := (drug_tok+ SEP)+ LABEL        SEP = "@DRUG@" or ";"
//
// The NER-extended schema prepends the exhaustive entity list:
//
//   ner_seq  := drug_tok+ (";" drug_tok+)* "@NER@" ner_rel* EOS
//   ner_rel  := drug_tok+ (";" drug_tok+)+ ("@POS@" | "@COMB@")
//
// A NOCOMB instance emits nothing after @NER@. Parsing is total: malformed
// input degrades into diagnostics, never failures.

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "combex/corpus.hpp"
#include "combex/tokenizer.hpp"

namespace combex {

enum class SchemaMode { ThreeWay, TwoWayPos, TwoWayAny, NerExtended };
enum class EntitySep { AtDrug, Semicolon };
enum class Ordering { DatasetOrder, LeftToRight };

struct Schema {
  SchemaMode mode = SchemaMode::ThreeWay;
  EntitySep entity_sep = EntitySep::AtDrug;
  Ordering ordering = Ordering::DatasetOrder;

  // NerExtended always uses ";" between entities; make() normalizes that.
  static Schema make(SchemaMode mode, EntitySep sep = EntitySep::AtDrug,
                     Ordering ordering = Ordering::DatasetOrder) {
    Schema s;
    s.mode = mode;
    s.entity_sep = mode == SchemaMode::NerExtended ? EntitySep::Semicolon : sep;
    s.ordering = ordering;
    return s;
  }

  const char* sep_surface() const {
    return entity_sep == EntitySep::AtDrug ? special::kDrug : special::kSemicolon;
  }

  // Labels this schema can emit as tokens.
  std::vector<Label> emitted_labels() const {
    switch (mode) {
      case SchemaMode::ThreeWay: return {Label::Pos, Label::Comb, Label::Nocomb};
      case SchemaMode::TwoWayPos: return {Label::Pos, Label::NonPos};
      case SchemaMode::TwoWayAny: return {Label::AnyComb, Label::Nocomb};
      case SchemaMode::NerExtended: return {Label::Pos, Label::Comb};
    }
    return {};
  }

  bool accepts(Label l) const {
    if (mode == SchemaMode::NerExtended) {
      return l == Label::Pos || l == Label::Comb || l == Label::Nocomb;
    }
    auto labels = emitted_labels();
    return std::find(labels.begin(), labels.end(), l) != labels.end();
  }

  std::optional<Label> label_of_surface(const std::string& s) const {
    for (Label l : emitted_labels()) {
      if (s == label_token(l)) return l;
    }
    return std::nullopt;
  }

  // Special surfaces owned by this schema: its labels, its separator, and
  // @NER@ in the extended mode. EOS and [SEP] are handled by callers.
  std::vector<std::string> special_surfaces() const {
    std::vector<std::string> out;
    for (Label l : emitted_labels()) out.push_back(label_token(l));
    out.push_back(sep_surface());
    if (mode == SchemaMode::NerExtended) out.push_back(special::kNer);
    return out;
  }

  bool is_schema_special(const std::string& surface) const {
    auto s = special_surfaces();
    return std::find(s.begin(), s.end(), surface) != s.end() ||
           surface == special::kEos || surface == special::kSep;
  }
};

inline std::optional<SchemaMode> parse_schema_mode(const std::string& s) {
  if (s == "three_way") return SchemaMode::ThreeWay;
  if (s == "two_way_pos") return SchemaMode::TwoWayPos;
  if (s == "two_way_any") return SchemaMode::TwoWayAny;
  if (s == "ner_extended") return SchemaMode::NerExtended;
  return std::nullopt;
}

inline const char* schema_mode_name(SchemaMode m) {
  switch (m) {
    case SchemaMode::ThreeWay: return "three_way";
    case SchemaMode::TwoWayPos: return "two_way_pos";
    case SchemaMode::TwoWayAny: return "two_way_any";
    case SchemaMode::NerExtended: return "ner_extended";
  }
  return "?";
}

enum class DiagCode {
  UnterminatedCombination,
  CombinationTooSmall,
  UnknownDrugString,
  DuplicateDrugInCombination,
  DuplicateCombination,
  EmptyOutput,
  CopyViolation,
};

inline const char* diag_name(DiagCode c) {
  switch (c) {
    case DiagCode::UnterminatedCombination: return "UnterminatedCombination";
    case DiagCode::CombinationTooSmall: return "CombinationTooSmall";
    case DiagCode::UnknownDrugString: return "UnknownDrugString";
    case DiagCode::DuplicateDrugInCombination: return "DuplicateDrugInCombination";
    case DiagCode::DuplicateCombination: return "DuplicateCombination";
    case DiagCode::EmptyOutput: return "EmptyOutput";
    case DiagCode::CopyViolation: return "CopyViolation";
  }
  return "?";
}

struct Diagnostic {
  DiagCode code;
  std::size_t position = 0;  // token index
};

// Collapses " - " to "-" wherever the joined form actually occurs in the
// reference sentence; all other spaced hyphens are left alone. Collapses can
// chain, so scanning resumes at the start of a merged run.
inline std::string postprocess_hyphens(const std::string& s, const std::string& sentence) {
  std::string out = s;
  std::size_t pos = 0;
  while (true) {
    std::size_t i = out.find(" - ", pos);
    if (i == std::string::npos) break;
    std::size_t lstart = i;
    while (lstart > 0 && !std::isspace(static_cast<unsigned char>(out[lstart - 1]))) --lstart;
    std::size_t rend = i + 3;
    while (rend < out.size() && !std::isspace(static_cast<unsigned char>(out[rend]))) ++rend;
    if (lstart == i || rend == i + 3) {  // no word on one side
      pos = i + 1;
      continue;
    }
    std::string candidate = out.substr(lstart, i - lstart) + "-" + out.substr(i + 3, rend - (i + 3));
    if (sentence.find(candidate) != std::string::npos) {
      out = out.substr(0, lstart) + candidate + out.substr(rend);
      pos = lstart;
    } else {
      pos = i + 1;
    }
  }
  return out;
}

// TWO_WAY_POS folds COMB and NOCOMB into NON-POS; TWO_WAY_ANY folds POS and
// COMB into ANY-COMB; the other modes are the identity. Relations that become
// identical merge, keeping first-occurrence order.
inline RelationSet relabel(const RelationSet& rels, SchemaMode mode) {
  RelationSet out;
  std::set<std::pair<std::vector<int>, Label>> seen;
  for (const auto& r : rels.relations) {
    Label l = r.label;
    if (mode == SchemaMode::TwoWayPos) {
      l = (l == Label::Pos) ? Label::Pos : Label::NonPos;
    } else if (mode == SchemaMode::TwoWayAny) {
      l = (l == Label::Nocomb) ? Label::Nocomb : Label::AnyComb;
    }
    if (!seen.insert({r.combo.sorted(), l}).second) continue;
    out.relations.push_back({r.combo, l});
  }
  return out;
}

// DatasetOrder keeps relations and their drugs in the order the record gave
// them. LeftToRight sorts drugs within each combination by span position and
// orders combinations lexicographically on their span-position lists, which
// puts a proper prefix before any extension of it.
inline std::vector<Relation> order_combinations(const RelationSet& rels,
                                                const Instance& inst,
                                                Ordering policy) {
  std::vector<Relation> out = rels.relations;
  if (policy == Ordering::DatasetOrder) return out;

  const int m = static_cast<int>(inst.drugs.size());
  for (auto& r : out) {
    for (int idx : r.combo.drug_indices) {
      if (idx < 0 || idx >= m) {
        throw std::out_of_range("left-to-right ordering needs a span for drug " +
                                std::to_string(idx));
      }
    }
    std::sort(r.combo.drug_indices.begin(), r.combo.drug_indices.end(),
              [&](int a, int b) {
                const DrugSpan& da = inst.drugs[static_cast<std::size_t>(a)];
                const DrugSpan& db = inst.drugs[static_cast<std::size_t>(b)];
                return std::tie(da.start, da.end, a) < std::tie(db.start, db.end, b);
              });
  }
  auto positions = [&](const Relation& r) {
    std::vector<std::pair<int, int>> p;
    for (int idx : r.combo.drug_indices) {
      const DrugSpan& d = inst.drugs[static_cast<std::size_t>(idx)];
      p.emplace_back(d.start, d.end);
    }
    return p;
  };
  std::stable_sort(out.begin(), out.end(), [&](const Relation& a, const Relation& b) {
    return positions(a) < positions(b);
  });
  return out;
}

namespace detail {
inline void append_name_tokens(const std::string& name, std::vector<Token>& out) {
  for (auto& t : tokenize(name)) out.push_back(std::move(t));
}
}  // namespace detail

inline std::vector<Token> linearize(const RelationSet& rels, const Instance& inst,
                                    const Schema& schema) {
  for (const auto& r : rels.relations) {
    if (!schema.accepts(r.label)) {
      throw std::invalid_argument(std::string("label ") + label_name(r.label) +
                                  " is not expressible under schema " +
                                  schema_mode_name(schema.mode));
    }
  }
  std::vector<Token> out;
  const auto ordered = order_combinations(rels, inst, schema.ordering);

  if (schema.mode == SchemaMode::NerExtended) {
    std::vector<int> entity_order(inst.drugs.size());
    for (std::size_t i = 0; i < entity_order.size(); ++i) entity_order[i] = static_cast<int>(i);
    if (schema.ordering == Ordering::LeftToRight) {
      std::sort(entity_order.begin(), entity_order.end(), [&](int a, int b) {
        const DrugSpan& da = inst.drugs[static_cast<std::size_t>(a)];
        const DrugSpan& db = inst.drugs[static_cast<std::size_t>(b)];
        return std::tie(da.start, da.end, a) < std::tie(db.start, db.end, b);
      });
    }
    for (std::size_t i = 0; i < entity_order.size(); ++i) {
      if (i) out.push_back(make_special(special::kSemicolon));
      detail::append_name_tokens(inst.drugs[static_cast<std::size_t>(entity_order[i])].text, out);
    }
    out.push_back(make_special(special::kNer));
    for (const auto& r : ordered) {
      if (r.label == Label::Nocomb) continue;  // entities alone encode NOCOMB
      for (std::size_t i = 0; i < r.combo.drug_indices.size(); ++i) {
        if (i) out.push_back(make_special(special::kSemicolon));
        detail::append_name_tokens(
            inst.drugs[static_cast<std::size_t>(r.combo.drug_indices[i])].text, out);
      }
      out.push_back(make_special(label_token(r.label)));
    }
    out.push_back(eos_token());
    return out;
  }

  for (const auto& r : ordered) {
    for (int idx : r.combo.drug_indices) {
      detail::append_name_tokens(inst.drugs.at(static_cast<std::size_t>(idx)).text, out);
      out.push_back(make_special(schema.sep_surface()));
    }
    out.push_back(make_special(label_token(r.label)));
  }
  out.push_back(eos_token());
  return out;
}

// Rendered text form: surfaces joined by single spaces, EOS dropped. This is
// the line format used by linearization and prediction files.
inline std::string render(const std::vector<Token>& seq) {
  std::string out;
  for (const auto& t : seq) {
    if (t.surface == special::kEos) continue;
    if (!out.empty()) out += ' ';
    out += t.surface;
  }
  return out;
}

struct DelinearizeResult {
  RelationSet relations;
  std::vector<Diagnostic> diagnostics;
  // NerExtended only: the parsed entity list (hyphen-repaired, deduplicated,
  // in order of first mention). Kept verbatim so NER scoring sees exactly
  // what was generated, matched or not.
  std::vector<std::string> entities;
};

namespace detail {

inline std::optional<int> match_drug(const std::string& raw, const Instance& inst) {
  const std::string name = postprocess_hyphens(raw, inst.target_sentence());
  for (std::size_t i = 0; i < inst.drugs.size(); ++i) {
    if (inst.drugs[i].text == name) return static_cast<int>(i);
  }
  return std::nullopt;
}

struct ComboBuilder {
  std::vector<Token> pending;
  std::vector<int> indices;

  bool empty() const { return pending.empty() && indices.empty(); }

  // Closes the pending drug tokens against the instance's drug list.
  void close_drug(const Instance& inst, std::size_t pos, std::vector<Diagnostic>& diags) {
    if (pending.empty()) {
      diags.push_back({DiagCode::UnknownDrugString, pos});
      return;
    }
    auto idx = match_drug(detokenize(pending), inst);
    pending.clear();
    if (!idx) {
      diags.push_back({DiagCode::UnknownDrugString, pos});
      return;
    }
    if (std::find(indices.begin(), indices.end(), *idx) != indices.end()) {
      diags.push_back({DiagCode::DuplicateDrugInCombination, pos});
      return;
    }
    indices.push_back(*idx);
  }

  void close_relation(Label label, std::size_t pos, RelationSet& rels,
                      std::vector<Diagnostic>& diags) {
    if (indices.size() < 2) {
      diags.push_back({DiagCode::CombinationTooSmall, pos});
      indices.clear();
      return;
    }
    Combination combo{indices};
    if (rels.contains(combo.sorted(), label)) {
      diags.push_back({DiagCode::DuplicateCombination, pos});
    } else {
      rels.relations.push_back({std::move(combo), label});
    }
    indices.clear();
  }
};

inline DelinearizeResult delinearize_flat(const std::vector<Token>& seq,
                                          const Instance& inst, const Schema& schema) {
  DelinearizeResult res;
  ComboBuilder b;
  std::size_t pos = 0;
  for (; pos < seq.size(); ++pos) {
    const Token& t = seq[pos];
    if (t.surface == special::kEos) break;
    if (t.surface == schema.sep_surface()) {
      b.close_drug(inst, pos, res.diagnostics);
      continue;
    }
    if (auto label = schema.label_of_surface(t.surface)) {
      // Grammar wants a separator before the label; accept the pending drug
      // anyway so one missing separator costs one diagnostic at most.
      if (!b.pending.empty()) b.close_drug(inst, pos, res.diagnostics);
      b.close_relation(*label, pos, res.relations, res.diagnostics);
      continue;
    }
    b.pending.push_back(t);
  }
  if (!b.empty()) {
    res.diagnostics.push_back({DiagCode::UnterminatedCombination, pos ? pos - 1 : 0});
  }
  if (pos == 0) {
    res.diagnostics.push_back({DiagCode::EmptyOutput, 0});
  }
  return res;
}

inline DelinearizeResult delinearize_ner(const std::vector<Token>& seq,
                                         const Instance& inst, const Schema& schema) {
  DelinearizeResult res;
  if (seq.empty() || seq.front().surface == special::kEos) {
    res.diagnostics.push_back({DiagCode::EmptyOutput, 0});
    return res;
  }
  std::size_t pos = 0;

  // Entity list up to @NER@.
  std::vector<Token> pending;
  bool saw_ner = false;
  auto close_entity = [&]() {
    if (pending.empty()) return;
    std::string name =
        postprocess_hyphens(detokenize(pending), inst.target_sentence());
    pending.clear();
    if (std::find(res.entities.begin(), res.entities.end(), name) == res.entities.end()) {
      res.entities.push_back(std::move(name));
    }
  };
  for (; pos < seq.size(); ++pos) {
    const Token& t = seq[pos];
    if (t.surface == special::kEos) break;
    if (t.surface == special::kNer) {
      close_entity();
      saw_ner = true;
      ++pos;
      break;
    }
    if (t.surface == special::kSemicolon) {
      close_entity();
      continue;
    }
    pending.push_back(t);
  }
  if (!saw_ner) {
    close_entity();
    res.diagnostics.push_back({DiagCode::UnterminatedCombination, pos ? pos - 1 : 0});
    return res;
  }

  // Relation list after @NER@; label closes the final drug per the grammar.
  ComboBuilder b;
  bool any_tail_tokens = false;
  for (; pos < seq.size(); ++pos) {
    const Token& t = seq[pos];
    if (t.surface == special::kEos) break;
    any_tail_tokens = true;
    if (t.surface == special::kSemicolon) {
      b.close_drug(inst, pos, res.diagnostics);
      continue;
    }
    if (auto label = schema.label_of_surface(t.surface)) {
      if (!b.pending.empty()) b.close_drug(inst, pos, res.diagnostics);
      b.close_relation(*label, pos, res.relations, res.diagnostics);
      continue;
    }
    b.pending.push_back(t);
  }
  if (!b.empty()) {
    res.diagnostics.push_back({DiagCode::UnterminatedCombination, pos ? pos - 1 : 0});
  }

  // Nothing after @NER@ means "no combinations": reconstruct the NOCOMB
  // relation over the entities that resolved to known drugs.
  if (!any_tail_tokens && res.relations.relations.empty()) {
    std::vector<int> indices;
    for (const auto& name : res.entities) {
      auto idx = match_drug(name, inst);
      if (!idx) {
        res.diagnostics.push_back({DiagCode::UnknownDrugString, pos ? pos - 1 : 0});
        continue;
      }
      if (std::find(indices.begin(), indices.end(), *idx) == indices.end()) {
        indices.push_back(*idx);
      }
    }
    if (indices.size() >= 2) {
      res.relations.relations.push_back({Combination{indices}, Label::Nocomb});
    } else {
      res.diagnostics.push_back({DiagCode::CombinationTooSmall, pos ? pos - 1 : 0});
    }
  }
  return res;
}

}  // namespace detail

// Total: any token sequence comes back as a relation set plus diagnostics.
inline DelinearizeResult delinearize(const std::vector<Token>& seq, const Instance& inst,
                                     const Schema& schema) {
  if (schema.mode == SchemaMode::NerExtended) {
    return detail::delinearize_ner(seq, inst, schema);
  }
  return detail::delinearize_flat(seq, inst, schema);
}

inline DelinearizeResult delinearize_line(const std::string& line, const Instance& inst,
                                          const Schema& schema) {
  return delinearize(tokenize(line), inst, schema);
}

}  // namespace combex
