#pragma once

// The copy-mechanism contract: per-step allowed-token sets that restrict
// generation to input tokens plus the schema's special tokens, and an
// optional grammar automaton for strict structural decoding. The automaton
// follows the linearization grammar; non-strict mode (the default) leaves the
// mask untouched, constraining vocabulary but not structure.

#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "combex/linearizer.hpp"
#include "combex/tokenizer.hpp"

namespace combex {

struct CopyMask {
  std::set<int> allowed;  // ordered for deterministic iteration

  bool contains(int id) const { return allowed.count(id) > 0; }
};

// Distinct ids of the input tokens, the schema's specials, and EOS. UNK never
// enters the mask, so out-of-vocabulary input tokens are unreachable.
inline CopyMask copy_mask(const std::vector<Token>& input_tokens, const Schema& schema,
                          const Vocab& vocab) {
  CopyMask mask;
  for (const auto& t : input_tokens) {
    int id = vocab.id(t);
    if (id != Vocab::kUnkId) mask.allowed.insert(id);
  }
  for (const auto& s : schema.special_surfaces()) mask.allowed.insert(vocab.id(s));
  mask.allowed.insert(vocab.eos_id());
  return mask;
}

enum class GState {
  // flat schemas
  FlatStart,       // nothing emitted yet: a drug token must come first
  FlatInDrug,      // inside a drug name
  FlatAfterSep,    // a drug just closed: next drug or the label
  FlatAfterLabel,  // a relation closed: next relation or EOS
  // NER-extended schema
  NerStart,        // entity list must start with a drug token
  NerInEntity,     // inside an entity name
  NerAfterSemi,    // ";" seen in the entity list
  NerBody,         // after @NER@ or after a relation label: relation or EOS
  NerRelFirst,     // inside the first drug of a relation
  NerRelSep,       // ";" seen inside a relation
  NerRelLater,     // inside a second-or-later drug: label becomes legal
  Done,            // EOS consumed
};

struct GrammarState {
  GState state = GState::FlatStart;
  bool strict = false;

  static GrammarState start(const Schema& schema, bool strict) {
    GrammarState gs;
    gs.state = schema.mode == SchemaMode::NerExtended ? GState::NerStart : GState::FlatStart;
    gs.strict = strict;
    return gs;
  }
};

namespace detail {

enum class TokClass { Word, Sep, Label, Ner, Eos };

inline TokClass classify(const std::string& surface, const Schema& schema) {
  if (surface == special::kEos) return TokClass::Eos;
  if (schema.mode == SchemaMode::NerExtended && surface == special::kNer) return TokClass::Ner;
  if (surface == schema.sep_surface()) return TokClass::Sep;
  if (schema.label_of_surface(surface)) return TokClass::Label;
  return TokClass::Word;
}

// Which token classes are legal in a state. Word is legal everywhere except
// after EOS.
inline bool sep_ok(GState s) {
  return s == GState::FlatInDrug || s == GState::NerInEntity ||
         s == GState::NerRelFirst || s == GState::NerRelLater;
}
inline bool label_ok(GState s) {
  return s == GState::FlatAfterSep || s == GState::NerRelLater;
}
inline bool ner_ok(GState s) { return s == GState::NerInEntity; }
inline bool eos_ok(GState s) {
  return s == GState::FlatAfterLabel || s == GState::NerBody;
}

}  // namespace detail

// Advances the automaton by one token; nullopt if the token is illegal in the
// current state.
inline std::optional<GrammarState> advance(const GrammarState& gs, const Token& tok,
                                           const Schema& schema) {
  using detail::TokClass;
  GrammarState next = gs;
  if (gs.state == GState::Done) return std::nullopt;
  switch (detail::classify(tok.surface, schema)) {
    case TokClass::Word:
      switch (gs.state) {
        case GState::FlatStart:
        case GState::FlatInDrug:
        case GState::FlatAfterSep:
        case GState::FlatAfterLabel:
          next.state = GState::FlatInDrug;
          return next;
        case GState::NerStart:
        case GState::NerInEntity:
        case GState::NerAfterSemi:
          next.state = GState::NerInEntity;
          return next;
        case GState::NerBody:
        case GState::NerRelFirst:
          next.state = GState::NerRelFirst;
          return next;
        case GState::NerRelSep:
        case GState::NerRelLater:
          next.state = GState::NerRelLater;
          return next;
        case GState::Done: return std::nullopt;
      }
      return std::nullopt;
    case TokClass::Sep:
      if (!detail::sep_ok(gs.state)) return std::nullopt;
      switch (gs.state) {
        case GState::FlatInDrug: next.state = GState::FlatAfterSep; break;
        case GState::NerInEntity: next.state = GState::NerAfterSemi; break;
        case GState::NerRelFirst:
        case GState::NerRelLater: next.state = GState::NerRelSep; break;
        default: return std::nullopt;
      }
      return next;
    case TokClass::Label:
      if (!detail::label_ok(gs.state)) return std::nullopt;
      next.state = gs.state == GState::FlatAfterSep ? GState::FlatAfterLabel : GState::NerBody;
      return next;
    case TokClass::Ner:
      if (!detail::ner_ok(gs.state)) return std::nullopt;
      next.state = GState::NerBody;
      return next;
    case TokClass::Eos:
      if (!detail::eos_ok(gs.state)) return std::nullopt;
      next.state = GState::Done;
      return next;
  }
  return std::nullopt;
}

// Token ids the decoder may emit next. Non-strict mode returns the mask as
// is; strict mode intersects it with the grammar-legal classes. The result is
// always a subset of the mask.
inline std::set<int> next_allowed(const GrammarState& gs, const CopyMask& mask,
                                  const Schema& schema, const Vocab& vocab) {
  if (!gs.strict) return mask.allowed;
  std::set<int> out;
  for (int id : mask.allowed) {
    const std::string& surface = vocab.token(id);
    if (surface == special::kSep) continue;  // window marker, never an output token
    switch (detail::classify(surface, schema)) {
      case detail::TokClass::Word:
        if (gs.state != GState::Done) out.insert(id);
        break;
      case detail::TokClass::Sep:
        if (detail::sep_ok(gs.state)) out.insert(id);
        break;
      case detail::TokClass::Label:
        if (detail::label_ok(gs.state)) out.insert(id);
        break;
      case detail::TokClass::Ner:
        if (detail::ner_ok(gs.state)) out.insert(id);
        break;
      case detail::TokClass::Eos:
        if (detail::eos_ok(gs.state)) out.insert(id);
        break;
    }
  }
  return out;
}

// Checks the copy contract (every non-special token occurs in the input) and
// that the sequence parses under the schema grammar. A trailing EOS is
// optional: line-oriented files carry sequences without it.
inline std::vector<Diagnostic> validate_sequence(const std::vector<Token>& seq,
                                                 const std::vector<Token>& input_tokens,
                                                 const Schema& schema) {
  std::vector<Diagnostic> diags;
  std::set<std::string> input_surfaces;
  for (const auto& t : input_tokens) input_surfaces.insert(t.surface);

  for (std::size_t i = 0; i < seq.size(); ++i) {
    const std::string& s = seq[i].surface;
    if (schema.is_schema_special(s)) continue;
    if (!input_surfaces.count(s)) diags.push_back({DiagCode::CopyViolation, i});
  }

  if (seq.empty()) {
    diags.push_back({DiagCode::EmptyOutput, 0});
    return diags;
  }
  GrammarState gs = GrammarState::start(schema, /*strict=*/true);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto next = advance(gs, seq[i], schema);
    if (!next) {
      DiagCode code = DiagCode::UnterminatedCombination;
      switch (detail::classify(seq[i].surface, schema)) {
        case detail::TokClass::Label: code = DiagCode::CombinationTooSmall; break;
        case detail::TokClass::Sep: code = DiagCode::UnknownDrugString; break;
        default: break;
      }
      diags.push_back({code, i});
      return diags;
    }
    gs = *next;
  }
  if (gs.state != GState::Done && !detail::eos_ok(gs.state)) {
    diags.push_back({DiagCode::UnterminatedCombination, seq.size() - 1});
  }
  return diags;
}

}  // namespace combex
