#pragma once

// Answer decoding: parallel projections of the fused state, cross-attention
// from answer-prefix queries onto the decoder input, teacher-forced NLL, and
// the weighted total loss.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "macvqa/attention.hpp"
#include "macvqa/linalg.hpp"
#include "macvqa/tape.hpp"

namespace macvqa::decoder {

using Token = std::uint32_t;
inline constexpr Token kPad = 0;

/// Exactly T token ids, padded with kPad.
struct AnswerSequence {
  std::vector<Token> tokens;

  friend bool operator==(const AnswerSequence&, const AnswerSequence&) = default;
};

struct DecoderParams {
  Parameter proj_v{"decoder.proj_v", Matrix{}};    // d_e×d
  Parameter proj_q{"decoder.proj_q", Matrix{}};    // d_e×d
  Parameter tok_emb{"decoder.tok_emb", Matrix{}};  // |vocab|×2d_e
  Parameter pos_emb{"decoder.pos_emb", Matrix{}};  // T×2d_e
  Parameter att_q{"decoder.att_q", Matrix{}};      // d_att×2d_e
  Parameter att_k{"decoder.att_k", Matrix{}};      // d_att×2d_e
  Parameter att_v{"decoder.att_v", Matrix{}};      // d_att×2d_e
  Parameter out_w{"decoder.out_w", Matrix{}};      // |vocab|×d_att
  Parameter out_b{"decoder.out_b", Matrix{}};      // 1×|vocab|

  DecoderParams() = default;
  DecoderParams(std::size_t d, std::size_t d_e, std::size_t d_att, std::size_t vocab, std::size_t steps) {
    if (vocab < 2) throw Error(ErrorKind::ConfigInvalid, "answer vocabulary must hold at least 2 tokens");
    if (steps < 1) throw Error(ErrorKind::ConfigInvalid, "answer length T must be >= 1");
    proj_v.reset(Matrix(d_e, d));
    proj_q.reset(Matrix(d_e, d));
    tok_emb.reset(Matrix(vocab, 2 * d_e));
    pos_emb.reset(Matrix(steps, 2 * d_e));
    att_q.reset(Matrix(d_att, 2 * d_e));
    att_k.reset(Matrix(d_att, 2 * d_e));
    att_v.reset(Matrix(d_att, 2 * d_e));
    out_w.reset(Matrix(vocab, d_att));
    out_b.reset(Matrix(1, vocab));
  }

  template <class Rng>
  static DecoderParams random(std::size_t d, std::size_t d_e, std::size_t d_att, std::size_t vocab, std::size_t steps,
                              Rng& rng) {
    DecoderParams p(d, d_e, d_att, vocab, steps);
    p.proj_v.reset(uniform_init(d_e, d, d, rng));
    p.proj_q.reset(uniform_init(d_e, d, d, rng));
    p.tok_emb.reset(uniform_init(vocab, 2 * d_e, 2 * d_e, rng));
    p.pos_emb.reset(uniform_init(steps, 2 * d_e, 2 * d_e, rng));
    p.att_q.reset(uniform_init(d_att, 2 * d_e, 2 * d_e, rng));
    p.att_k.reset(uniform_init(d_att, 2 * d_e, 2 * d_e, rng));
    p.att_v.reset(uniform_init(d_att, 2 * d_e, 2 * d_e, rng));
    p.out_w.reset(uniform_init(vocab, d_att, d_att, rng));
    p.out_b.reset(uniform_init(1, vocab, d_att, rng));
    return p;
  }

  std::size_t vocab() const { return tok_emb.value.rows(); }
  std::size_t steps() const { return pos_emb.value.rows(); }
  std::size_t input_dim() const { return proj_v.value.cols(); }
};

inline void check_answer(const AnswerSequence& a, std::size_t vocab, std::size_t steps) {
  if (a.tokens.size() != steps)
    throw Error(ErrorKind::DimensionMismatch,
                "answer has " + std::to_string(a.tokens.size()) + " tokens, expected " + std::to_string(steps));
  for (Token tok : a.tokens)
    if (tok >= vocab) throw Error(ErrorKind::TokenOutOfRange, "token " + std::to_string(tok) + " outside vocabulary");
}

// ---------------------------------------------------------------------------
// Tape-level operations.

/// E = [W_v h′; W_q h′] as 1×2d_e.
template <class P>
Var project_and_concat(Tape& t, Var h_fused, P& p) {
  if (h_fused.cols() != p.input_dim())
    throw Error(ErrorKind::DimensionMismatch, "project_and_concat: input dim does not match projections");
  return ad::concat_cols(ad::linear(h_fused, bind(t, p.proj_v)), ad::linear(h_fused, bind(t, p.proj_q)));
}

/// Log-probabilities (1×|vocab|) for every step given the token prefix fed at
/// each step. `prefix[s]` is the token consumed at step s (kPad at s = 0).
/// Step s attends from its own query onto [E; q_0..q_s].
template <class P>
std::vector<Var> step_log_probs(Tape& t, Var e, const std::vector<Token>& prefix, P& p) {
  Var tok = bind(t, p.tok_emb);
  Var pos = bind(t, p.pos_emb);
  Var wq = bind(t, p.att_q), wk = bind(t, p.att_k), wv = bind(t, p.att_v);
  Var wo = bind(t, p.out_w), bo = bind(t, p.out_b);
  std::vector<Var> out;
  Var memory = e;
  for (std::size_t s = 0; s < prefix.size(); ++s) {
    Var q = ad::add(ad::slice_rows(tok, prefix[s], 1), ad::slice_rows(pos, s, 1));
    memory = ad::concat_rows(memory, q);
    Var ctx = ad::attention(ad::linear(q, wq), ad::linear(memory, wk), ad::linear(memory, wv));
    out.push_back(ad::log_softmax_rows(ad::add(ad::linear(ctx, wo), bo)));
  }
  return out;
}

/// Teacher-forced −Σ_t log P(A_t | A_<t, E), skipping pad targets.
template <class P>
Var decode_loss(Tape& t, Var e, const AnswerSequence& truth, P& p) {
  check_answer(truth, p.vocab(), p.steps());
  if (e.cols() != p.att_k.value.cols())
    throw Error(ErrorKind::DimensionMismatch, "decode_loss: decoder input width mismatch");
  std::vector<Token> prefix(truth.tokens.size(), kPad);
  for (std::size_t s = 1; s < prefix.size(); ++s) prefix[s] = truth.tokens[s - 1];
  auto logp = step_log_probs(t, e, prefix, p);
  Var loss = t.constant(Matrix(1, 1));
  for (std::size_t s = 0; s < logp.size(); ++s) {
    if (truth.tokens[s] == kPad) continue;
    loss = ad::sub(loss, ad::pick(logp[s], 0, truth.tokens[s]));
  }
  return loss;
}

/// Greedy argmax decoding, feeding each prediction back as the next prefix.
template <class P>
AnswerSequence greedy_decode(Tape& t, Var e, P& p) {
  AnswerSequence out;
  std::vector<Token> prefix{kPad};
  for (std::size_t s = 0; s < p.steps(); ++s) {
    auto logp = step_log_probs(t, e, prefix, p);
    const auto& row = logp.back().value().values();
    const auto best = static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
    out.tokens.push_back(best);
    prefix.push_back(best);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value-level API.

inline Vector project_and_concat(const Vector& h_fused, const DecoderParams& p) {
  Tape t;
  return Vector::from_row(project_and_concat(t, t.constant(h_fused.as_row()), p).value());
}

inline Matrix cross_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  Tape t;
  return ad::attention(t.constant(q), t.constant(k), t.constant(v)).value();
}

inline double decode_loss(const Vector& e, const AnswerSequence& truth, const DecoderParams& p) {
  Tape t;
  return decode_loss(t, t.constant(e.as_row()), truth, p).scalar();
}

inline AnswerSequence greedy_decode(const Vector& e, const DecoderParams& p) {
  Tape t;
  return greedy_decode(t, t.constant(e.as_row()), p);
}

using LossWeights = std::array<double, 3>;

inline void require_loss_simplex(const LossWeights& phi) {
  double s = 0.0;
  for (double x : phi) {
    if (!(x >= 0.0)) throw Error(ErrorKind::SimplexViolation, "loss weights must be non-negative");
    s += x;
  }
  if (std::abs(s - 1.0) > 1e-9)
    throw Error(ErrorKind::SimplexViolation, "loss weights must sum to 1 (got " + std::to_string(s) + ")");
}

/// φ1·L_gonf + φ2·L_ama + φ3·L_dec.
inline double total_loss(double l_gonf, double l_ama, double l_dec, const LossWeights& phi) {
  require_loss_simplex(phi);
  return phi[0] * l_gonf + phi[1] * l_ama + phi[2] * l_dec;
}

inline Var total_loss(Var l_gonf, Var l_ama, Var l_dec, const LossWeights& phi) {
  require_loss_simplex(phi);
  return ad::add(ad::add(ad::scale(l_gonf, phi[0]), ad::scale(l_ama, phi[1])), ad::scale(l_dec, phi[2]));
}

}  // namespace macvqa::decoder
