#pragma once

// Exact-match set evaluation. A predicted relation is correct iff its
// normalized drug-name set equals a gold relation's name set and the labels
// match; counts are micro-summed over instances. Name normalization is
// hyphen repair plus case-sensitive comparison, with repeated identical
// names inside one combination collapsing to one.

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "combex/corpus.hpp"
#include "combex/linearizer.hpp"

namespace combex {

struct ClassScore {
  long n_pred = 0;
  long n_gold = 0;
  long n_correct = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;

  void finalize() {
    precision = n_pred > 0 ? static_cast<double>(n_correct) / static_cast<double>(n_pred) : 0.0;
    recall = n_gold > 0 ? static_cast<double>(n_correct) / static_cast<double>(n_gold) : 0.0;
    f1 = (precision + recall) > 0.0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
  }
};

struct ScoreReport {
  std::map<Label, ClassScore> per_class;
  ClassScore micro;
};

using NamedRelation = std::pair<std::set<std::string>, Label>;

// Index-level relations resolved to drug-name sets; duplicates collapse.
inline std::set<NamedRelation> normalize_relations(const RelationSet& rels,
                                                   const Instance& inst) {
  std::set<NamedRelation> out;
  for (const auto& r : rels.relations) {
    std::set<std::string> names;
    for (int idx : r.combo.drug_indices) {
      names.insert(inst.drugs.at(static_cast<std::size_t>(idx)).text);
    }
    out.insert({std::move(names), r.label});
  }
  return out;
}

inline RelationSet collapse_anycomb(const RelationSet& rels) {
  return relabel(rels, SchemaMode::TwoWayAny);
}

inline ScoreReport score_relations(const std::vector<RelationSet>& preds,
                                   const std::vector<RelationSet>& golds,
                                   const std::vector<Instance>& instances,
                                   const std::set<Label>& class_filter = {}) {
  if (preds.size() != golds.size() || preds.size() != instances.size()) {
    throw std::invalid_argument("score_relations: prediction/gold/instance lists differ in length");
  }
  ScoreReport report;
  auto counted = [&](Label l) {
    return class_filter.empty() || class_filter.count(l) > 0;
  };
  for (std::size_t i = 0; i < preds.size(); ++i) {
    auto p = normalize_relations(preds[i], instances[i]);
    auto g = normalize_relations(golds[i], instances[i]);
    for (const auto& rel : p) {
      if (!counted(rel.second)) continue;
      ++report.per_class[rel.second].n_pred;
      if (g.count(rel)) ++report.per_class[rel.second].n_correct;
    }
    for (const auto& rel : g) {
      if (!counted(rel.second)) continue;
      ++report.per_class[rel.second].n_gold;
    }
  }
  for (auto& [label, score] : report.per_class) {
    (void)label;
    score.finalize();
    report.micro.n_pred += score.n_pred;
    report.micro.n_gold += score.n_gold;
    report.micro.n_correct += score.n_correct;
  }
  report.micro.finalize();
  return report;
}

// Micro P/R/F1 over exact entity-name matches per instance.
inline ScoreReport score_ner(const std::vector<std::set<std::string>>& preds,
                             const std::vector<std::set<std::string>>& golds) {
  if (preds.size() != golds.size()) {
    throw std::invalid_argument("score_ner: prediction/gold lists differ in length");
  }
  ScoreReport report;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    report.micro.n_pred += static_cast<long>(preds[i].size());
    report.micro.n_gold += static_cast<long>(golds[i].size());
    for (const auto& name : preds[i]) {
      if (golds[i].count(name)) ++report.micro.n_correct;
    }
  }
  report.micro.finalize();
  return report;
}

inline nlohmann::json class_score_to_json(const ClassScore& s) {
  return {{"p", s.precision}, {"r", s.recall},       {"f1", s.f1},
          {"n_pred", s.n_pred}, {"n_gold", s.n_gold}, {"n_correct", s.n_correct}};
}

inline nlohmann::json report_to_json(const ScoreReport& report) {
  nlohmann::json j;
  for (const auto& [label, score] : report.per_class) {
    j[label_name(label)] = class_score_to_json(score);
  }
  j["micro"] = class_score_to_json(report.micro);
  return j;
}

}  // namespace combex
