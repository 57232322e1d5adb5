#pragma once

// Deterministic synthetic-corpus generator. Sentences come from class-keyed
// templates whose cue words are shared between splits while the surrounding
// filler is not, so a desk-scale model can learn the mapping yet never sees a
// test sentence verbatim. Drug names are invented; a slice of the lexicon is
// hyphenated so the hyphen post-processing path is always exercised. The
// multi-combination fraction counts among POS/COMB instances, mirroring how
// the source statistic is defined over combination-bearing sentences.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "combex/corpus.hpp"
#include "combex/rng.hpp"

namespace combex {

struct SynthConfig {
  int n_train = 500;
  int n_test = 100;
  int lexicon_size = 60;
  int max_drugs = 4;  // drugs mentioned per sentence, 2..6
  double mix_pos = 0.52;
  double mix_comb = 0.23;
  double mix_nocomb = 0.25;
  double multi_comb_fraction = 0.16;
  std::uint64_t seed = 1234;
};

struct SynthCorpus {
  std::vector<Instance> train;
  std::vector<Instance> test;
};

namespace synth_detail {

inline std::vector<std::string> build_lexicon(int size) {
  static const std::vector<std::string> pre = {
      "velo", "dora", "mira", "zanu", "kelo", "fera", "nilo", "sora",
      "cabo", "tegra", "bumo", "ralti", "pexi", "lavo", "quira", "domi"};
  static const std::vector<std::string> suf = {
      "tinib", "mab", "zole", "parin", "statin", "cycline",
      "navir", "olol", "pride", "fenib", "xane", "micin"};
  const int cap = static_cast<int>(pre.size() * suf.size());
  if (size < 2 || size > cap) {
    throw std::invalid_argument("lexicon size must be in [2, " + std::to_string(cap) + "]");
  }
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    const std::string& p = pre[static_cast<std::size_t>(i) % pre.size()];
    const std::string& s = suf[(static_cast<std::size_t>(i) / pre.size() +
                                static_cast<std::size_t>(i)) % suf.size()];
    names.push_back(i % 7 == 3 ? p + "-" + s : p + s);  // ~14% hyphenated
  }
  return names;
}

class SentenceBuilder {
 public:
  void words(const std::string& w) {
    if (!text_.empty()) text_ += ' ';
    text_ += w;
  }

  int drug(const std::string& name) {
    if (!text_.empty()) text_ += ' ';
    int start = static_cast<int>(text_.size());
    text_ += name;
    spans_.push_back({start, static_cast<int>(text_.size()), name});
    return static_cast<int>(spans_.size()) - 1;
  }

  void drug_list(const std::vector<std::string>& names, const std::string& joiner,
                 std::vector<int>& out_indices) {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (i) words(joiner);
      out_indices.push_back(drug(names[i]));
    }
  }

  std::string text() const { return text_; }
  const std::vector<DrugSpan>& spans() const { return spans_; }

 private:
  std::string text_;
  std::vector<DrugSpan> spans_;
};

struct TemplatePool {
  std::vector<std::string> pos_open;    // before the drug list
  std::vector<std::string> pos_close;   // after it, carries the POS cue
  std::vector<std::string> comb_open;
  std::vector<std::string> comb_close;
  std::vector<std::string> nocomb_close;
  std::vector<std::string> comb_multi_mid;
  std::vector<std::string> distract_pos;
  std::vector<std::string> distract_comb;
  std::vector<std::string> lead_fillers;
  std::vector<std::string> trail_fillers;
};

inline TemplatePool train_pool() {
  TemplatePool p;
  p.pos_open = {"Treatment with", "Combination therapy with", "A regimen of"};
  p.pos_close = {"significantly improved survival in patients .",
                 "markedly improved survival across the cohort .",
                 "clearly improved survival rates ."};
  p.comb_open = {"Patients received", "Subjects received", "Each patient received"};
  p.comb_close = {"during the induction phase .", "on consecutive days .",
                  "at the standard dose ."};
  p.nocomb_close = {"were evaluated separately in earlier trials .",
                    "were studied independently as single agents .",
                    "were given alone in unrelated settings ."};
  p.comb_multi_mid = {"followed by"};
  p.distract_pos = {", whereas", "did not ."};
  p.distract_comb = {", while", "was withheld ."};
  p.lead_fillers = {"This multicenter study enrolled adult participants .",
                    "Baseline characteristics were balanced between groups ."};
  p.trail_fillers = {"Adverse events were mild in most cases .",
                     "Longer follow-up is planned ."};
  return p;
}

inline TemplatePool test_pool() {
  TemplatePool p;
  p.pos_open = {"Therapy using", "Maintenance treatment with"};
  p.pos_close = {"improved survival among treated adults .",
                 "improved survival during extended follow-up ."};
  p.comb_open = {"Participants received", "Enrolled adults received"};
  p.comb_close = {"throughout the maintenance phase .", "at enrollment ."};
  p.nocomb_close = {"were assessed separately at each site .",
                    "were examined independently by the panel ."};
  p.comb_multi_mid = {"followed by"};
  p.distract_pos = {", whereas", "showed no benefit ."};
  p.distract_comb = {", while", "remained optional ."};
  p.lead_fillers = {"This registry captured consecutive cases .",
                    "Demographics were similar across cohorts ."};
  p.trail_fillers = {"Tolerability was acceptable overall .",
                     "Further validation is ongoing ."};
  return p;
}

inline const std::string& pick(const std::vector<std::string>& v, Rng& rng) {
  return v[static_cast<std::size_t>(rng.index(static_cast<int>(v.size())))];
}

inline std::vector<std::string> sample_names(const std::vector<std::string>& lexicon,
                                             int k, Rng& rng) {
  std::vector<int> idx(lexicon.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::vector<std::string> out;
  int n = static_cast<int>(idx.size());
  for (int i = 0; i < k; ++i) {  // partial Fisher-Yates
    int j = i + rng.index(n - i);
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    out.push_back(lexicon[static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
  }
  return out;
}

inline Instance build_instance(const SynthConfig& cfg, const TemplatePool& pool,
                               const std::vector<std::string>& lexicon,
                               const std::string& doc_id, Rng& rng) {
  Instance inst;
  inst.doc_id = doc_id;

  const double x = rng.uniform();
  Label cls = Label::Pos;
  if (x >= cfg.mix_pos) cls = x < cfg.mix_pos + cfg.mix_comb ? Label::Comb : Label::Nocomb;

  SentenceBuilder sb;
  const bool can_multi = cfg.max_drugs >= 3;
  const bool multi = cls != Label::Nocomb && can_multi &&
                     rng.uniform() < cfg.multi_comb_fraction;

  if (multi && cls == Label::Pos) {
    // "{a} and {b} each combined with {s} <cue>" — two POS pairs sharing an
    // anchor drug, so the anchor is emitted twice in the target sequence
    auto names = sample_names(lexicon, 3, rng);
    int a = sb.drug(names[0]);
    sb.words("and");
    int b = sb.drug(names[1]);
    sb.words("each combined with");
    int s = sb.drug(names[2]);
    sb.words(pick(pool.pos_close, rng));
    inst.gold.relations.push_back({Combination{{a, s}}, Label::Pos});
    inst.gold.relations.push_back({Combination{{b, s}}, Label::Pos});
  } else if (multi && cls == Label::Comb) {
    auto names = sample_names(lexicon, 4, rng);
    sb.words(pick(pool.comb_open, rng));
    std::vector<int> first, second;
    sb.drug_list({names[0], names[1]}, "and", first);
    sb.words(pick(pool.comb_multi_mid, rng));
    sb.drug_list({names[2], names[3]}, "and", second);
    sb.words(pick(pool.comb_close, rng));
    inst.gold.relations.push_back({Combination{first}, Label::Comb});
    inst.gold.relations.push_back({Combination{second}, Label::Comb});
  } else if (cls == Label::Nocomb) {
    int k = 2 + rng.index(std::min(cfg.max_drugs, 3) - 1);
    auto names = sample_names(lexicon, k, rng);
    std::vector<int> all;
    sb.drug_list(names, "versus", all);
    sb.words(pick(pool.nocomb_close, rng));
    inst.gold.relations.push_back({Combination{all}, Label::Nocomb});
  } else {
    const bool ternary = cfg.max_drugs >= 3 && rng.uniform() < 0.25;
    const bool distract = rng.uniform() < 0.25 && cfg.max_drugs > (ternary ? 3 : 2);
    int k = (ternary ? 3 : 2) + (distract ? 1 : 0);
    auto names = sample_names(lexicon, k, rng);
    std::vector<int> combo;
    if (cls == Label::Pos) {
      sb.words(pick(pool.pos_open, rng));
      sb.drug_list({names.begin(), names.begin() + (ternary ? 3 : 2)}, "plus", combo);
      sb.words(pick(pool.pos_close, rng));
      if (distract) {
        sb.words(pool.distract_pos[0]);
        sb.drug(names.back());
        sb.words("alone");
        sb.words(pool.distract_pos[1]);
      }
      inst.gold.relations.push_back({Combination{combo}, Label::Pos});
    } else {
      sb.words(pick(pool.comb_open, rng));
      sb.drug_list({names.begin(), names.begin() + (ternary ? 3 : 2)}, "and", combo);
      sb.words(pick(pool.comb_close, rng));
      if (distract) {
        sb.words(pool.distract_comb[0]);
        sb.drug(names.back());
        sb.words(pool.distract_comb[1]);
      }
      inst.gold.relations.push_back({Combination{combo}, Label::Comb});
    }
  }

  const int n_lead = rng.index(3);
  const int n_trail = rng.index(3);
  for (int i = 0; i < n_lead; ++i) inst.sentences.push_back(pick(pool.lead_fillers, rng));
  inst.target_index = n_lead;
  inst.sentences.push_back(sb.text());
  for (int i = 0; i < n_trail; ++i) inst.sentences.push_back(pick(pool.trail_fillers, rng));
  inst.drugs = sb.spans();
  return inst;
}

}  // namespace synth_detail

inline SynthCorpus generate(const SynthConfig& cfg) {
  if (cfg.n_train <= 0 || cfg.n_test <= 0) {
    throw std::invalid_argument("instance counts must be positive");
  }
  if (cfg.max_drugs < 2 || cfg.max_drugs > 6) {
    throw std::invalid_argument("max_drugs must be in [2, 6]");
  }
  const double mix = cfg.mix_pos + cfg.mix_comb + cfg.mix_nocomb;
  if (cfg.mix_pos < 0 || cfg.mix_comb < 0 || cfg.mix_nocomb < 0 ||
      mix < 0.999 || mix > 1.001) {
    throw std::invalid_argument("class mix must be non-negative and sum to 1");
  }
  if (cfg.multi_comb_fraction < 0.0 || cfg.multi_comb_fraction > 1.0) {
    throw std::invalid_argument("multi-combination fraction must be in [0, 1]");
  }

  auto lexicon = synth_detail::build_lexicon(cfg.lexicon_size);
  SynthCorpus corpus;
  Rng rng(cfg.seed);
  auto tr_pool = synth_detail::train_pool();
  for (int i = 0; i < cfg.n_train; ++i) {
    corpus.train.push_back(synth_detail::build_instance(
        cfg, tr_pool, lexicon, "synth-train-" + std::to_string(i), rng));
  }
  Rng test_rng(cfg.seed ^ 0xC0FFEE1234ABCDEFULL);
  auto te_pool = synth_detail::test_pool();
  for (int i = 0; i < cfg.n_test; ++i) {
    corpus.test.push_back(synth_detail::build_instance(
        cfg, te_pool, lexicon, "synth-test-" + std::to_string(i), test_rng));
  }
  return corpus;
}

}  // namespace combex
