#pragma once

// Desk-scale encoder-decoder with a copy-constrained output layer.
//
// Encoder: token embeddings into a single bidirectional GRU layer. Decoder:
// one GRU layer fed the previous target embedding, additive attention over
// encoder states, and an output distribution formed by a single softmax over
// (one entry per input position with a known vocabulary id) ∪ (one entry per
// schema special token ∪ EOS). The probability of a token *type* is the sum
// of its entries, so generation is structurally restricted to input tokens
// plus specials and nothing else ever receives mass.
//
// Everything is double precision with hand-written gradients; grad_check
// compares them against central finite differences.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "combex/corpus.hpp"
#include "combex/decode.hpp"
#include "combex/linearizer.hpp"
#include "combex/rng.hpp"
#include "combex/tokenizer.hpp"

namespace combex {

struct ModelConfig {
  int embed_dim = 64;
  int hidden_dim = 128;
  double encoder_lr = 1e-3;
  double decoder_lr = 1e-3;
  int epochs = 50;
  std::uint64_t seed = 42;
  int max_decode_steps = 128;
  double clip_norm = 5.0;

  void validate() const {
    if (embed_dim <= 0 || hidden_dim <= 0) throw std::invalid_argument("model dims must be positive");
    if (encoder_lr <= 0 || decoder_lr <= 0) throw std::invalid_argument("learning rates must be positive");
    if (epochs <= 0) throw std::invalid_argument("epochs must be positive");
    if (max_decode_steps <= 0) throw std::invalid_argument("decode step cap must be positive");
  }
};

namespace nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

inline Vec sigmoid(const Vec& x) { return ((-x.array()).exp() + 1.0).inverse().matrix(); }

struct GruParams {
  Mat wz, wr, wg;  // input weights  (H x De)
  Mat uz, ur, ug;  // state weights  (H x H)
  Vec bz, br, bg;

  void resize(int hidden, int input) {
    wz.resize(hidden, input); wr.resize(hidden, input); wg.resize(hidden, input);
    uz.resize(hidden, hidden); ur.resize(hidden, hidden); ug.resize(hidden, hidden);
    bz.resize(hidden); br.resize(hidden); bg.resize(hidden);
  }
};

struct GruStep {
  Vec x, h_prev, z, r, g, rh, h;
};

inline GruStep gru_forward(const GruParams& p, const Vec& x, const Vec& h_prev) {
  GruStep s;
  s.x = x;
  s.h_prev = h_prev;
  s.z = sigmoid(p.wz * x + p.uz * h_prev + p.bz);
  s.r = sigmoid(p.wr * x + p.ur * h_prev + p.br);
  s.rh = s.r.cwiseProduct(h_prev);
  s.g = (p.wg * x + p.ug * s.rh + p.bg).array().tanh().matrix();
  s.h = (Vec::Ones(s.z.size()) - s.z).cwiseProduct(h_prev) + s.z.cwiseProduct(s.g);
  return s;
}

// Adds this step's parameter gradients to `g` and returns gradients w.r.t.
// the step input and previous state.
inline void gru_backward(const GruParams& p, GruParams& g, const GruStep& s,
                         const Vec& dh, Vec& dx, Vec& dh_prev) {
  const Vec dz = dh.cwiseProduct(s.g - s.h_prev);
  const Vec dg = dh.cwiseProduct(s.z);
  dh_prev = dh.cwiseProduct(Vec::Ones(s.z.size()) - s.z);

  const Vec dag = dg.cwiseProduct((1.0 - s.g.array().square()).matrix());
  g.wg += dag * s.x.transpose();
  g.ug += dag * s.rh.transpose();
  g.bg += dag;
  const Vec drh = p.ug.transpose() * dag;
  const Vec dr = drh.cwiseProduct(s.h_prev);
  dh_prev += drh.cwiseProduct(s.r);

  const Vec daz = dz.cwiseProduct(s.z.cwiseProduct(Vec::Ones(s.z.size()) - s.z));
  g.wz += daz * s.x.transpose();
  g.uz += daz * s.h_prev.transpose();
  g.bz += daz;
  dh_prev += p.uz.transpose() * daz;

  const Vec dar = dr.cwiseProduct(s.r.cwiseProduct(Vec::Ones(s.r.size()) - s.r));
  g.wr += dar * s.x.transpose();
  g.ur += dar * s.h_prev.transpose();
  g.br += dar;
  dh_prev += p.ur.transpose() * dar;

  dx = p.wz.transpose() * daz + p.wr.transpose() * dar + p.wg.transpose() * dag;
}

}  // namespace nn

struct Params {
  // encoder group
  nn::Mat enc_embed;               // V x De
  nn::GruParams enc_fwd, enc_bwd;  // hidden H each; encoder state is 2H
  // decoder group
  nn::Mat dec_embed;               // V x De
  nn::GruParams dec;               // H, fed the previous target embedding
  nn::Mat w_init;                  // H x 2H (from mean encoder state)
  nn::Vec b_init;
  nn::Mat w_att_s;                 // H x H
  nn::Mat w_att_h;                 // H x 2H
  nn::Vec b_att, v_att;            // H
  nn::Mat w_out;                   // H x 3H  ([s; c])
  nn::Vec b_out;                   // H
  nn::Mat w_copy;                  // H x 2H  (position score = o · (w_copy h + b_copy))
  nn::Vec b_copy;                  // H
  nn::Mat w_spec;                  // n_specials x H
  nn::Vec b_spec;                  // n_specials

  void resize(const ModelConfig& cfg, int vocab_size) {
    const int de = cfg.embed_dim;
    const int h = cfg.hidden_dim;
    const int ns = static_cast<int>(Vocab::special_block().size());
    enc_embed.resize(vocab_size, de);
    enc_fwd.resize(h, de);
    enc_bwd.resize(h, de);
    dec_embed.resize(vocab_size, de);
    dec.resize(h, de);
    w_init.resize(h, 2 * h);
    b_init.resize(h);
    w_att_s.resize(h, h);
    w_att_h.resize(h, 2 * h);
    b_att.resize(h);
    v_att.resize(h);
    w_out.resize(h, 3 * h);
    b_out.resize(h);
    w_copy.resize(h, 2 * h);
    b_copy.resize(h);
    w_spec.resize(ns, h);
    b_spec.resize(ns);
  }

  enum class Group { Encoder, Decoder };

  template <class F>
  void for_each(F&& f) {
    auto gru = [&](const char* prefix, nn::GruParams& g, Group grp) {
      std::string p(prefix);
      f(p + ".wz", g.wz, grp); f(p + ".wr", g.wr, grp); f(p + ".wg", g.wg, grp);
      f(p + ".uz", g.uz, grp); f(p + ".ur", g.ur, grp); f(p + ".ug", g.ug, grp);
      f(p + ".bz", g.bz, grp); f(p + ".br", g.br, grp); f(p + ".bg", g.bg, grp);
    };
    f("enc_embed", enc_embed, Group::Encoder);
    gru("enc_fwd", enc_fwd, Group::Encoder);
    gru("enc_bwd", enc_bwd, Group::Encoder);
    f("dec_embed", dec_embed, Group::Decoder);
    gru("dec", dec, Group::Decoder);
    f("w_init", w_init, Group::Decoder);
    f("b_init", b_init, Group::Decoder);
    f("w_att_s", w_att_s, Group::Decoder);
    f("w_att_h", w_att_h, Group::Decoder);
    f("b_att", b_att, Group::Decoder);
    f("v_att", v_att, Group::Decoder);
    f("w_out", w_out, Group::Decoder);
    f("b_out", b_out, Group::Decoder);
    f("w_copy", w_copy, Group::Decoder);
    f("b_copy", b_copy, Group::Decoder);
    f("w_spec", w_spec, Group::Decoder);
    f("b_spec", b_spec, Group::Decoder);
  }

  void init(const ModelConfig& cfg, int vocab_size) {
    resize(cfg, vocab_size);
    Rng rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
    for_each([&](const std::string&, auto& tensor, Group) {
      double* d = tensor.data();
      for (Eigen::Index i = 0; i < tensor.size(); ++i) d[i] = rng.uniform(-0.08, 0.08);
    });
  }

  void set_zero() {
    for_each([](const std::string&, auto& tensor, Group) { tensor.setZero(); });
  }

  void add_scaled(Params& other, double enc_scale, double dec_scale) {
    std::vector<std::pair<double*, Eigen::Index>> mine;
    std::vector<double> scales;
    for_each([&](const std::string&, auto& tensor, Group g) {
      mine.push_back({tensor.data(), tensor.size()});
      scales.push_back(g == Group::Encoder ? enc_scale : dec_scale);
    });
    std::size_t k = 0;
    other.for_each([&](const std::string&, auto& tensor, Group) {
      double* dst = mine[k].first;
      const double* src = tensor.data();
      for (Eigen::Index i = 0; i < tensor.size(); ++i) dst[i] += scales[k] * src[i];
      ++k;
    });
  }

  double squared_norm() {
    double total = 0.0;
    for_each([&](const std::string&, auto& tensor, Group) { total += tensor.squaredNorm(); });
    return total;
  }
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t vocab_hash = 0;
  std::uint64_t train_steps = 0;
  Params params;
};

struct EncodedExample {
  std::string doc_id;
  std::vector<Token> input_tokens;
  std::vector<int> input_ids;
  std::vector<int> target_ids;  // ends with EOS
};

// Windowed input plus the gold linearization (relabeled into the schema's
// label space) as decoder target ids.
inline EncodedExample encode_example(const Instance& inst, const Schema& schema,
                                     const WindowConfig& wcfg, const Vocab& vocab) {
  EncodedExample ex;
  ex.doc_id = inst.doc_id;
  ex.input_tokens = tokenize(window(inst, wcfg));
  for (const auto& t : ex.input_tokens) ex.input_ids.push_back(vocab.id(t));
  const auto target = linearize(relabel(inst.gold, schema.mode), inst, schema);
  for (const auto& t : target) {
    int id = vocab.id(t);
    if (id == Vocab::kUnkId) {
      throw std::runtime_error("target token '" + t.surface +
                               "' is outside the vocabulary for instance " + inst.doc_id);
    }
    ex.target_ids.push_back(id);
  }
  return ex;
}

namespace nn {

// One softmax entry: either "copy input position" or "emit special id".
struct EntryTable {
  std::vector<int> copy_pos;   // encoder positions with a known vocab id
  std::vector<int> copy_id;    // vocab id at that position
  std::vector<int> spec_id;    // special-token vocab ids (schema specials + EOS)
  std::vector<int> spec_row;   // row into w_spec / b_spec

  int size() const { return static_cast<int>(copy_pos.size() + spec_id.size()); }
};

inline EntryTable build_entries(const std::vector<int>& input_ids, const Schema& schema,
                                const Vocab& vocab) {
  EntryTable t;
  for (std::size_t i = 0; i < input_ids.size(); ++i) {
    if (input_ids[i] == Vocab::kUnkId) continue;
    t.copy_pos.push_back(static_cast<int>(i));
    t.copy_id.push_back(input_ids[i]);
  }
  auto add_special = [&](const std::string& surface) {
    int id = vocab.id(surface);
    for (int existing : t.spec_id) {
      if (existing == id) return;
    }
    t.spec_id.push_back(id);
    t.spec_row.push_back(id - 1);  // special block starts at vocab id 1
  };
  for (const auto& s : schema.special_surfaces()) add_special(s);
  add_special(special::kEos);
  return t;
}

// Encoder forward: per-position concatenated bidirectional states.
struct EncoderTrace {
  std::vector<GruStep> fwd, bwd;
  std::vector<Vec> h;  // 2H per position
  Vec h_mean;
};

inline EncoderTrace encode_forward(const Params& p, const std::vector<int>& ids, int hidden) {
  const int L = static_cast<int>(ids.size());
  if (L == 0) throw std::invalid_argument("cannot encode an empty input");
  EncoderTrace tr;
  tr.fwd.reserve(L);
  tr.bwd.resize(L);
  Vec h = Vec::Zero(hidden);
  for (int i = 0; i < L; ++i) {
    Vec x = p.enc_embed.row(ids[static_cast<std::size_t>(i)]).transpose();
    tr.fwd.push_back(gru_forward(p.enc_fwd, x, h));
    h = tr.fwd.back().h;
  }
  h = Vec::Zero(hidden);
  for (int i = L - 1; i >= 0; --i) {
    Vec x = p.enc_embed.row(ids[static_cast<std::size_t>(i)]).transpose();
    tr.bwd[static_cast<std::size_t>(i)] = gru_forward(p.enc_bwd, x, h);
    h = tr.bwd[static_cast<std::size_t>(i)].h;
  }
  tr.h.resize(L);
  tr.h_mean = Vec::Zero(2 * hidden);
  for (int i = 0; i < L; ++i) {
    Vec cat(2 * hidden);
    cat << tr.fwd[static_cast<std::size_t>(i)].h, tr.bwd[static_cast<std::size_t>(i)].h;
    tr.h[static_cast<std::size_t>(i)] = cat;
    tr.h_mean += cat;
  }
  tr.h_mean /= static_cast<double>(L);
  return tr;
}

struct StepTrace {
  GruStep gru;
  Mat att_tanh;  // H x L
  Vec e, alpha;  // L
  Vec c;         // 2H
  Vec o_pre, o;  // H
  Vec scores;    // entry scores
  Vec probs;     // softmax over entries
};

// Attention + output distribution for one decoder state. `proj` holds
// w_copy·h_i + b_copy per position (precomputed once per example).
inline StepTrace decoder_step(const Params& p, const EncoderTrace& enc, const Mat& proj,
                              const EntryTable& entries, const Vec& x, const Vec& s_prev) {
  StepTrace st;
  st.gru = gru_forward(p.dec, x, s_prev);
  const Vec& s = st.gru.h;
  const int L = static_cast<int>(enc.h.size());
  const Vec ws = p.w_att_s * s + p.b_att;
  st.att_tanh.resize(ws.size(), L);
  st.e.resize(L);
  for (int i = 0; i < L; ++i) {
    st.att_tanh.col(i) = (p.w_att_h * enc.h[static_cast<std::size_t>(i)] + ws).array().tanh();
    st.e(i) = p.v_att.dot(st.att_tanh.col(i));
  }
  const double emax = st.e.maxCoeff();
  st.alpha = (st.e.array() - emax).exp();
  st.alpha /= st.alpha.sum();
  st.c = Vec::Zero(enc.h[0].size());
  for (int i = 0; i < L; ++i) st.c += st.alpha(i) * enc.h[static_cast<std::size_t>(i)];
  Vec sc(s.size() + st.c.size());
  sc << s, st.c;
  st.o_pre = p.w_out * sc + p.b_out;
  st.o = st.o_pre.array().tanh();

  st.scores.resize(entries.size());
  int k = 0;
  for (std::size_t j = 0; j < entries.copy_pos.size(); ++j, ++k) {
    st.scores(k) = st.o.dot(proj.col(entries.copy_pos[j]));
  }
  for (std::size_t j = 0; j < entries.spec_id.size(); ++j, ++k) {
    st.scores(k) = p.w_spec.row(entries.spec_row[j]).dot(st.o) + p.b_spec(entries.spec_row[j]);
  }
  const double smax = st.scores.maxCoeff();
  st.probs = (st.scores.array() - smax).exp();
  st.probs /= st.probs.sum();
  return st;
}

// Probability of emitting `id`: sum of its entries.
inline double prob_of_id(const EntryTable& entries, const Vec& probs, int id) {
  double q = 0.0;
  int k = 0;
  for (std::size_t j = 0; j < entries.copy_id.size(); ++j, ++k) {
    if (entries.copy_id[j] == id) q += probs(k);
  }
  for (std::size_t j = 0; j < entries.spec_id.size(); ++j, ++k) {
    if (entries.spec_id[j] == id) q += probs(k);
  }
  return q;
}

}  // namespace nn

namespace model_detail {

// Forward (and optionally backward) over one example. Returns summed NLL over
// target tokens; `scale` multiplies the gradient contribution.
inline double example_loss(const Params& p, const ModelConfig& cfg,
                           const EncodedExample& ex, const Schema& schema,
                           const Vocab& vocab, Params* grads, double scale) {
  using nn::Mat;
  using nn::Vec;
  const int hidden = cfg.hidden_dim;
  const nn::EntryTable entries = nn::build_entries(ex.input_ids, schema, vocab);
  const nn::EncoderTrace enc = nn::encode_forward(p, ex.input_ids, hidden);
  const int L = static_cast<int>(enc.h.size());
  const int eos = vocab.eos_id();

  Mat proj(hidden, L);
  for (int i = 0; i < L; ++i) {
    proj.col(i) = p.w_copy * enc.h[static_cast<std::size_t>(i)] + p.b_copy;
  }

  const Vec init_pre = p.w_init * enc.h_mean + p.b_init;
  const Vec s0 = init_pre.array().tanh();

  const int T = static_cast<int>(ex.target_ids.size());
  std::vector<nn::StepTrace> steps;
  steps.reserve(static_cast<std::size_t>(T));
  std::vector<int> prev_ids(static_cast<std::size_t>(T));
  double nll = 0.0;
  Vec s = s0;
  for (int t = 0; t < T; ++t) {
    prev_ids[static_cast<std::size_t>(t)] = t == 0 ? eos : ex.target_ids[static_cast<std::size_t>(t - 1)];
    Vec x = p.dec_embed.row(prev_ids[static_cast<std::size_t>(t)]).transpose();
    steps.push_back(nn::decoder_step(p, enc, proj, entries, x, s));
    const double q = nn::prob_of_id(entries, steps.back().probs, ex.target_ids[static_cast<std::size_t>(t)]);
    if (q <= 0.0) {
      throw std::runtime_error("target token '" +
                               vocab.token(ex.target_ids[static_cast<std::size_t>(t)]) +
                               "' is outside the copy mask for instance " + ex.doc_id);
    }
    nll -= std::log(q);
    s = steps.back().gru.h;
  }
  if (!grads) return nll;

  Params& g = *grads;
  Mat dproj = Mat::Zero(hidden, L);
  std::vector<Vec> dh(static_cast<std::size_t>(L), Vec::Zero(2 * hidden));
  Vec ds_next = Vec::Zero(hidden);

  for (int t = T - 1; t >= 0; --t) {
    const nn::StepTrace& st = steps[static_cast<std::size_t>(t)];
    const int target = ex.target_ids[static_cast<std::size_t>(t)];
    const double q = nn::prob_of_id(entries, st.probs, target);

    // d(-log q)/d(score_k) = p_k - [k ∈ target entries] p_k / q
    Vec dscore = st.probs;
    int k = 0;
    for (std::size_t j = 0; j < entries.copy_id.size(); ++j, ++k) {
      if (entries.copy_id[j] == target) dscore(k) -= st.probs(k) / q;
    }
    for (std::size_t j = 0; j < entries.spec_id.size(); ++j, ++k) {
      if (entries.spec_id[j] == target) dscore(k) -= st.probs(k) / q;
    }
    dscore *= scale;

    Vec do_ = Vec::Zero(hidden);
    k = 0;
    for (std::size_t j = 0; j < entries.copy_pos.size(); ++j, ++k) {
      const int pos = entries.copy_pos[j];
      do_ += dscore(k) * proj.col(pos);
      dproj.col(pos) += dscore(k) * st.o;
    }
    for (std::size_t j = 0; j < entries.spec_id.size(); ++j, ++k) {
      const int row = entries.spec_row[j];
      do_ += dscore(k) * p.w_spec.row(row).transpose();
      g.w_spec.row(row) += dscore(k) * st.o.transpose();
      g.b_spec(row) += dscore(k);
    }

    const Vec do_pre = do_.cwiseProduct((1.0 - st.o.array().square()).matrix());
    Vec sc(hidden + 2 * hidden);
    sc << st.gru.h, st.c;
    g.w_out += do_pre * sc.transpose();
    g.b_out += do_pre;
    Vec ds = p.w_out.leftCols(hidden).transpose() * do_pre;
    Vec dc = p.w_out.rightCols(2 * hidden).transpose() * do_pre;

    Vec dalpha(L);
    for (int i = 0; i < L; ++i) {
      dalpha(i) = dc.dot(enc.h[static_cast<std::size_t>(i)]);
      dh[static_cast<std::size_t>(i)] += st.alpha(i) * dc;
    }
    const double adot = st.alpha.dot(dalpha);
    const Vec de = st.alpha.cwiseProduct((dalpha.array() - adot).matrix());

    for (int i = 0; i < L; ++i) {
      const Vec da = de(i) * p.v_att.cwiseProduct(
          (1.0 - st.att_tanh.col(i).array().square()).matrix());
      g.v_att += de(i) * st.att_tanh.col(i);
      g.w_att_s += da * st.gru.h.transpose();
      g.w_att_h += da * enc.h[static_cast<std::size_t>(i)].transpose();
      g.b_att += da;
      ds += p.w_att_s.transpose() * da;
      dh[static_cast<std::size_t>(i)] += p.w_att_h.transpose() * da;
    }

    ds += ds_next;
    Vec dx;
    nn::gru_backward(p.dec, g.dec, st.gru, ds, dx, ds_next);
    g.dec_embed.row(prev_ids[static_cast<std::size_t>(t)]) += dx.transpose();
  }

  // into the initial state and the copy projections
  const Vec dinit = ds_next.cwiseProduct((1.0 - s0.array().square()).matrix());
  g.w_init += dinit * enc.h_mean.transpose();
  g.b_init += dinit;
  const Vec dh_mean = p.w_init.transpose() * dinit;
  for (int i = 0; i < L; ++i) {
    dh[static_cast<std::size_t>(i)] += dh_mean / static_cast<double>(L);
    g.w_copy += dproj.col(i) * enc.h[static_cast<std::size_t>(i)].transpose();
    g.b_copy += dproj.col(i);
    dh[static_cast<std::size_t>(i)] += p.w_copy.transpose() * dproj.col(i);
  }

  // encoder BPTT, forward direction then backward direction
  Vec carry = Vec::Zero(hidden);
  for (int i = L - 1; i >= 0; --i) {
    const Vec dh_dir = dh[static_cast<std::size_t>(i)].head(hidden) + carry;
    Vec dx;
    nn::gru_backward(p.enc_fwd, g.enc_fwd, enc.fwd[static_cast<std::size_t>(i)], dh_dir, dx, carry);
    g.enc_embed.row(ex.input_ids[static_cast<std::size_t>(i)]) += dx.transpose();
  }
  carry = Vec::Zero(hidden);
  for (int i = 0; i < L; ++i) {
    const Vec dh_dir = dh[static_cast<std::size_t>(i)].tail(hidden) + carry;
    Vec dx;
    nn::gru_backward(p.enc_bwd, g.enc_bwd, enc.bwd[static_cast<std::size_t>(i)], dh_dir, dx, carry);
    g.enc_embed.row(ex.input_ids[static_cast<std::size_t>(i)]) += dx.transpose();
  }
  return nll;
}

}  // namespace model_detail

// Mean negative log-probability per target token over the batch.
inline double forward_loss(const std::vector<EncodedExample>& batch, const Params& params,
                           const ModelConfig& cfg, const Schema& schema, const Vocab& vocab) {
  double nll = 0.0;
  long tokens = 0;
  for (const auto& ex : batch) {
    nll += model_detail::example_loss(params, cfg, ex, schema, vocab, nullptr, 0.0);
    tokens += static_cast<long>(ex.target_ids.size());
  }
  if (tokens == 0) throw std::invalid_argument("forward_loss on an empty batch");
  return nll / static_cast<double>(tokens);
}

// Same mean loss, with gradients of it accumulated into `grads`.
inline double forward_backward(const std::vector<EncodedExample>& batch, const Params& params,
                               const ModelConfig& cfg, const Schema& schema, const Vocab& vocab,
                               Params& grads) {
  long tokens = 0;
  for (const auto& ex : batch) tokens += static_cast<long>(ex.target_ids.size());
  if (tokens == 0) throw std::invalid_argument("forward_backward on an empty batch");
  const double scale = 1.0 / static_cast<double>(tokens);
  double nll = 0.0;
  for (const auto& ex : batch) {
    nll += model_detail::example_loss(params, cfg, ex, schema, vocab, &grads, scale);
  }
  return nll * scale;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<double> epoch_loss;
  bool diverged = false;
};

// Plain per-instance gradient descent with global-norm clipping, teacher
// forcing throughout. Deterministic for a given seed. A NaN epoch aborts and
// the last finite epoch's parameters are returned.
inline TrainResult train(const std::vector<Instance>& corpus, const Schema& schema,
                         const ModelConfig& cfg, const WindowConfig& wcfg, const Vocab& vocab) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("cannot train on an empty corpus");

  std::vector<EncodedExample> examples;
  examples.reserve(corpus.size());
  for (const auto& inst : corpus) examples.push_back(encode_example(inst, schema, wcfg, vocab));

  TrainResult result;
  result.checkpoint.config = cfg;
  result.checkpoint.vocab_hash = vocab.hash();
  Params& params = result.checkpoint.params;
  params.init(cfg, vocab.size());

  Params grads, snapshot = params;
  grads.resize(cfg, vocab.size());
  Rng shuffle_rng(cfg.seed ^ 0xA5A5A5A55A5A5A5AULL);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(shuffle_rng.index(static_cast<int>(i)))]);
    }
    double nll = 0.0;
    long tokens = 0;
    for (std::size_t idx : order) {
      const EncodedExample& ex = examples[idx];
      grads.set_zero();
      const double ex_tokens = static_cast<double>(ex.target_ids.size());
      nll += model_detail::example_loss(params, cfg, ex, schema, vocab, &grads,
                                        1.0 / ex_tokens);
      tokens += static_cast<long>(ex.target_ids.size());
      const double norm = std::sqrt(grads.squared_norm());
      const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
      params.add_scaled(grads, -cfg.encoder_lr * clip, -cfg.decoder_lr * clip);
      ++result.checkpoint.train_steps;
    }
    const double epoch_loss = nll / static_cast<double>(tokens);
    if (!std::isfinite(epoch_loss)) {
      params = snapshot;  // last finite epoch
      result.diverged = true;
      break;
    }
    result.epoch_loss.push_back(epoch_loss);
    snapshot = params;
  }
  return result;
}

struct DecodeOutput {
  std::vector<Token> tokens;
  std::vector<double> step_logprob;
  bool hit_step_cap = false;
};

struct PredictResult {
  DelinearizeResult parsed;
  DecodeOutput decode;
};

// Greedy constrained decoding followed by delinearization (which applies the
// hyphen repair). Every emitted token is checked against the copy mask; the
// per-step distribution must sum to 1 within 1e-6.
inline PredictResult predict(const Instance& inst, const Checkpoint& ckpt,
                             const Schema& schema, bool strict, const WindowConfig& wcfg,
                             const Vocab& vocab) {
  if (ckpt.vocab_hash != vocab.hash()) {
    throw std::runtime_error("checkpoint was trained with a different vocabulary");
  }
  const ModelConfig& cfg = ckpt.config;
  const Params& p = ckpt.params;

  const std::vector<Token> input_tokens = tokenize(window(inst, wcfg));
  std::vector<int> input_ids;
  for (const auto& t : input_tokens) input_ids.push_back(vocab.id(t));

  const nn::EntryTable entries = nn::build_entries(input_ids, schema, vocab);
  const nn::EncoderTrace enc = nn::encode_forward(p, input_ids, cfg.hidden_dim);
  const int L = static_cast<int>(enc.h.size());
  nn::Mat proj(cfg.hidden_dim, L);
  for (int i = 0; i < L; ++i) {
    proj.col(i) = p.w_copy * enc.h[static_cast<std::size_t>(i)] + p.b_copy;
  }

  const CopyMask mask = copy_mask(input_tokens, schema, vocab);
  GrammarState gs = GrammarState::start(schema, strict);
  const int eos = vocab.eos_id();

  PredictResult out;
  nn::Vec s = (p.w_init * enc.h_mean + p.b_init).array().tanh();
  int prev = eos;
  for (int step = 0; step < cfg.max_decode_steps; ++step) {
    nn::Vec x = p.dec_embed.row(prev).transpose();
    const nn::StepTrace st = nn::decoder_step(p, enc, proj, entries, x, s);
    const double total = st.probs.sum();
    if (std::abs(total - 1.0) > 1e-6) {
      throw std::logic_error("decode step distribution does not sum to 1");
    }

    std::map<int, double> by_id;
    int k = 0;
    for (std::size_t j = 0; j < entries.copy_id.size(); ++j, ++k) by_id[entries.copy_id[j]] += st.probs(k);
    for (std::size_t j = 0; j < entries.spec_id.size(); ++j, ++k) by_id[entries.spec_id[j]] += st.probs(k);

    const std::set<int> allowed = next_allowed(gs, mask, schema, vocab);
    int best = -1;
    double best_p = -1.0;
    for (int id : allowed) {
      auto it = by_id.find(id);
      const double q = it == by_id.end() ? 0.0 : it->second;
      if (q > best_p) {
        best_p = q;
        best = id;
      }
    }
    if (best < 0) break;  // strict grammar left nothing emittable
    if (!mask.contains(best)) {
      throw std::logic_error("decoder emitted a token outside the copy mask");
    }
    out.decode.tokens.push_back(vocab.token_of(best));
    out.decode.step_logprob.push_back(std::log(std::max(by_id[best], 1e-300)));
    if (best == eos) break;
    if (strict) {
      auto next = advance(gs, out.decode.tokens.back(), schema);
      if (!next) break;
      gs = *next;
    }
    s = st.gru.h;
    prev = best;
  }
  out.decode.hit_step_cap =
      static_cast<int>(out.decode.tokens.size()) == cfg.max_decode_steps &&
      (out.decode.tokens.empty() || out.decode.tokens.back().surface != special::kEos);
  out.parsed = delinearize(out.decode.tokens, inst, schema);
  return out;
}

// ---- checkpoint serialization -------------------------------------------

namespace model_detail {
constexpr char kMagic[8] = {'C', 'B', 'X', 'C', 'K', 'P', 'T', '1'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
void read_pod(std::istream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
}  // namespace model_detail

inline void save_checkpoint(Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(model_detail::kMagic, sizeof(model_detail::kMagic));
  const ModelConfig& c = ckpt.config;
  model_detail::write_pod(out, c.embed_dim);
  model_detail::write_pod(out, c.hidden_dim);
  model_detail::write_pod(out, c.encoder_lr);
  model_detail::write_pod(out, c.decoder_lr);
  model_detail::write_pod(out, c.epochs);
  model_detail::write_pod(out, c.seed);
  model_detail::write_pod(out, c.max_decode_steps);
  model_detail::write_pod(out, c.clip_norm);
  model_detail::write_pod(out, ckpt.vocab_hash);
  model_detail::write_pod(out, ckpt.train_steps);
  std::uint32_t count = 0;
  ckpt.params.for_each([&](const std::string&, auto&, Params::Group) { ++count; });
  model_detail::write_pod(out, count);
  ckpt.params.for_each([&](const std::string& name, auto& tensor, Params::Group) {
    const std::uint32_t len = static_cast<std::uint32_t>(name.size());
    model_detail::write_pod(out, len);
    out.write(name.data(), len);
    const std::uint64_t rows = static_cast<std::uint64_t>(tensor.rows());
    const std::uint64_t cols = static_cast<std::uint64_t>(tensor.cols());
    model_detail::write_pod(out, rows);
    model_detail::write_pod(out, cols);
    out.write(reinterpret_cast<const char*>(tensor.data()),
              static_cast<std::streamsize>(sizeof(double) * tensor.size()));
  });
  if (!out) throw std::runtime_error("short write while saving checkpoint: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path, int vocab_size) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, model_detail::kMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  Checkpoint ckpt;
  ModelConfig& c = ckpt.config;
  model_detail::read_pod(in, c.embed_dim);
  model_detail::read_pod(in, c.hidden_dim);
  model_detail::read_pod(in, c.encoder_lr);
  model_detail::read_pod(in, c.decoder_lr);
  model_detail::read_pod(in, c.epochs);
  model_detail::read_pod(in, c.seed);
  model_detail::read_pod(in, c.max_decode_steps);
  model_detail::read_pod(in, c.clip_norm);
  model_detail::read_pod(in, ckpt.vocab_hash);
  model_detail::read_pod(in, ckpt.train_steps);
  std::uint32_t count = 0;
  model_detail::read_pod(in, count);
  ckpt.params.resize(c, vocab_size);
  std::uint32_t seen = 0;
  ckpt.params.for_each([&](const std::string& name, auto& tensor, Params::Group) {
    std::uint32_t len = 0;
    model_detail::read_pod(in, len);
    std::string stored(len, '\0');
    in.read(stored.data(), len);
    std::uint64_t rows = 0, cols = 0;
    model_detail::read_pod(in, rows);
    model_detail::read_pod(in, cols);
    if (stored != name || rows != static_cast<std::uint64_t>(tensor.rows()) ||
        cols != static_cast<std::uint64_t>(tensor.cols())) {
      throw std::runtime_error("checkpoint parameter '" + stored +
                               "' does not match the expected shape for '" + name + "'");
    }
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(sizeof(double) * tensor.size()));
    ++seen;
  });
  if (!in || seen != count) throw std::runtime_error("truncated checkpoint: " + path);
  return ckpt;
}

// ---- gradient verification ----------------------------------------------

// Compares analytic gradients against central finite differences over at
// least `min_samples` coordinates, visiting every parameter tensor.
inline double grad_check(const ModelConfig& cfg, const std::vector<Instance>& probe,
                         const Schema& schema, const WindowConfig& wcfg, const Vocab& vocab,
                         int min_samples = 200) {
  cfg.validate();
  std::vector<EncodedExample> batch;
  for (const auto& inst : probe) batch.push_back(encode_example(inst, schema, wcfg, vocab));

  Params params;
  params.init(cfg, vocab.size());
  Params grads;
  grads.resize(cfg, vocab.size());
  grads.set_zero();
  forward_backward(batch, params, cfg, schema, vocab, grads);

  struct Slot {
    double* value;
    double analytic;
  };
  std::vector<Slot> slots;
  Rng rng(cfg.seed ^ 0xFEEDFACECAFEBEEFULL);

  std::vector<std::pair<double*, double*>> tensors;  // (param data, grad data)
  std::vector<Eigen::Index> sizes;
  params.for_each([&](const std::string&, auto& tensor, Params::Group) {
    tensors.emplace_back(tensor.data(), nullptr);
    sizes.push_back(tensor.size());
  });
  std::size_t k = 0;
  grads.for_each([&](const std::string&, auto& tensor, Params::Group) {
    tensors[k++].second = tensor.data();
  });

  for (std::size_t t = 0; t < tensors.size(); ++t) {
    for (int j = 0; j < 3; ++j) {
      const Eigen::Index i = rng.index(static_cast<int>(sizes[t]));
      slots.push_back({tensors[t].first + i, tensors[t].second[i]});
    }
  }
  while (static_cast<int>(slots.size()) < min_samples) {
    const std::size_t t = static_cast<std::size_t>(rng.index(static_cast<int>(tensors.size())));
    const Eigen::Index i = rng.index(static_cast<int>(sizes[t]));
    slots.push_back({tensors[t].first + i, tensors[t].second[i]});
  }

  const double eps = 1e-5;
  double worst = 0.0;
  for (const Slot& slot : slots) {
    const double saved = *slot.value;
    *slot.value = saved + eps;
    const double up = forward_loss(batch, params, cfg, schema, vocab);
    *slot.value = saved - eps;
    const double down = forward_loss(batch, params, cfg, schema, vocab);
    *slot.value = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max({1e-6, std::abs(numeric), std::abs(slot.analytic)});
    worst = std::max(worst, std::abs(numeric - slot.analytic) / denom);
  }
  return worst;
}

}  // namespace combex
