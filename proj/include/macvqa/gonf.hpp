#pragma once

// Global noise filtering: attention-scored global fusion of region features,
// autoencoder denoising, residual enhancement, and the filtering loss.

#include <cmath>
#include <cstddef>
#include <random>

#include "macvqa/attention.hpp"
#include "macvqa/linalg.hpp"
#include "macvqa/tape.hpp"

namespace macvqa::gonf {

using RegionFeatures = Matrix;    // n×d
using QueryEmbedding = Matrix;    // L×d
using AttentionWeights = Vector;  // n, on the simplex

enum class EntropySign {
  AsPrinted,  // + (-θ1 ω log ω): minimizing sharpens the attention
  Smoothing,  // - (-θ1 ω log ω): minimizing flattens the attention
};

/// Linear map d -> 1 producing one score per region.
struct Scorer {
  Parameter weight{"gonf.scorer.w", Matrix{}};  // 1×d
  Parameter bias{"gonf.scorer.b", Matrix{}};    // 1×1

  Scorer() = default;
  explicit Scorer(std::size_t d) {
    weight.reset(Matrix(1, d));
    bias.reset(Matrix(1, 1));
  }
  template <class Rng>
  static Scorer random(std::size_t d, Rng& rng) {
    Scorer s;
    s.weight.reset(uniform_init(1, d, d, rng));
    s.bias.reset(uniform_init(1, 1, d, rng));
    return s;
  }
};

/// Single hidden layer d -> h -> d with ReLU.
struct DaeParams {
  Parameter enc_w{"gonf.dae.enc_w", Matrix{}};  // h×d
  Parameter enc_b{"gonf.dae.enc_b", Matrix{}};  // 1×h
  Parameter dec_w{"gonf.dae.dec_w", Matrix{}};  // d×h
  Parameter dec_b{"gonf.dae.dec_b", Matrix{}};  // 1×d
  double noise_std = 0.0;

  DaeParams() = default;
  DaeParams(std::size_t d, std::size_t h, double noise) : noise_std(noise) {
    if (h == 0) throw Error(ErrorKind::ConfigInvalid, "DAE hidden width must be >= 1");
    if (noise < 0.0) throw Error(ErrorKind::ConfigInvalid, "DAE noise std must be >= 0");
    enc_w.reset(Matrix(h, d));
    enc_b.reset(Matrix(1, h));
    dec_w.reset(Matrix(d, h));
    dec_b.reset(Matrix(1, d));
  }
  template <class Rng>
  static DaeParams random(std::size_t d, std::size_t h, double noise, Rng& rng) {
    DaeParams p(d, h, noise);
    p.enc_w.reset(uniform_init(h, d, d, rng));
    p.enc_b.reset(uniform_init(1, h, d, rng));
    p.dec_w.reset(uniform_init(d, h, h, rng));
    p.dec_b.reset(uniform_init(1, d, h, rng));
    return p;
  }

  std::size_t input_dim() const { return enc_w.value.cols(); }
  std::size_t hidden() const { return enc_w.value.rows(); }
};

inline std::size_t default_hidden(std::size_t d) { return (d + 1) / 2; }

/// Self-attention projections of the multimodal encoder, each d×d.
struct EncoderParams {
  Parameter wq{"encoder.wq", Matrix{}};
  Parameter wk{"encoder.wk", Matrix{}};
  Parameter wv{"encoder.wv", Matrix{}};

  EncoderParams() = default;
  explicit EncoderParams(std::size_t d) {
    wq.reset(Matrix(d, d));
    wk.reset(Matrix(d, d));
    wv.reset(Matrix(d, d));
  }
  template <class Rng>
  static EncoderParams random(std::size_t d, Rng& rng) {
    EncoderParams p;
    p.wq.reset(uniform_init(d, d, d, rng));
    p.wk.reset(uniform_init(d, d, d, rng));
    p.wv.reset(uniform_init(d, d, d, rng));
    return p;
  }
};

struct GonfOutput {
  AttentionWeights weights;
  Vector global;
  RegionFeatures denoised;
  RegionFeatures enhanced;
};

// ---------------------------------------------------------------------------
// Tape-level operations. Vectors are 1×k rows.

/// Region weights as a 1×n row.
template <class S>
Var score_regions(Tape& t, Var v, S& scorer) {
  if (scorer.weight.value.cols() != v.cols())
    throw Error(ErrorKind::DimensionMismatch, "score_regions: scorer width does not match region dim");
  require_finite(v.value().values(), "score_regions");
  Var scores = ad::add_row(ad::linear(v, bind(t, scorer.weight)), bind(t, scorer.bias));  // n×1
  return ad::softmax_rows(ad::transpose(scores));
}

/// G = Σ_m ω_m V_m, as 1×d.
inline Var global_fuse(Var v, Var w) {
  if (w.rows() != 1 || w.cols() != v.rows())
    throw Error(ErrorKind::DimensionMismatch, "global_fuse: weight count does not match region count");
  return ad::matmul(w, v);
}

/// Each row mapped encoder -> ReLU -> decoder. Gaussian corruption of std
/// noise_std is added to the input only when `training` is set.
template <class P, class Rng>
Var dae_forward(Tape& t, Var v, P& p, bool training, Rng& rng) {
  if (p.input_dim() != v.cols() || p.dec_w.value.rows() != v.cols())
    throw Error(ErrorKind::DimensionMismatch, "dae_forward: parameter dims do not match region dim");
  Var input = v;
  if (training && p.noise_std > 0.0) {
    std::normal_distribution<double> noise(0.0, p.noise_std);
    Matrix eps(v.rows(), v.cols());
    for (auto& e : eps.values()) e = noise(rng);
    input = ad::add(v, t.constant(std::move(eps)));
  }
  Var hidden = ad::relu(ad::add_row(ad::linear(input, bind(t, p.enc_w)), bind(t, p.enc_b)));
  return ad::add_row(ad::linear(hidden, bind(t, p.dec_w)), bind(t, p.dec_b));
}

/// V″_m = V′_m + G.
inline Var enhance(Var denoised, Var global) {
  if (global.rows() != 1 || global.cols() != denoised.cols())
    throw Error(ErrorKind::DimensionMismatch, "enhance: global feature width does not match region dim");
  return ad::add_row(denoised, global);
}

/// (1/n) Σ_m ( ‖V_m − V′_m‖² − s·θ1 ω_m log ω_m ), s = +1 as printed, −1 for smoothing.
inline Var gonf_loss(Var v, Var denoised, Var w, double theta1, EntropySign sign = EntropySign::AsPrinted) {
  if (!v.value().same_shape(denoised.value()))
    throw Error(ErrorKind::DimensionMismatch, "gonf_loss: denoised shape differs from input");
  if (w.rows() != 1 || w.cols() != v.rows())
    throw Error(ErrorKind::DimensionMismatch, "gonf_loss: weight count does not match region count");
  const double n = static_cast<double>(v.rows());
  const double s = sign == EntropySign::AsPrinted ? 1.0 : -1.0;
  Var recon = ad::sum_sq(ad::sub(v, denoised));
  Var ent = ad::sum(ad::xlogx(w));
  return ad::scale(ad::sub(recon, ad::scale(ent, s * theta1)), 1.0 / n);
}

/// One self-attention layer over [V″; Q] followed by mean pooling; returns H as 1×d.
template <class E>
Var encode_multimodal(Tape& t, Var enhanced, Var query, E& enc) {
  if (enhanced.cols() != query.cols())
    throw Error(ErrorKind::DimensionMismatch, "encode_multimodal: region and query dims differ");
  if (enc.wq.value.cols() != enhanced.cols())
    throw Error(ErrorKind::DimensionMismatch, "encode_multimodal: projection width does not match dim");
  Var x = ad::concat_rows(enhanced, query);
  Var q = ad::linear(x, bind(t, enc.wq));
  Var k = ad::linear(x, bind(t, enc.wk));
  Var val = ad::linear(x, bind(t, enc.wv));
  return ad::mean_rows(ad::attention(q, k, val));
}

/// Bypass used when filtering is disabled: H = mean of the rows of [V; Q].
inline Var mean_pool(Var regions, Var query) {
  if (regions.cols() != query.cols())
    throw Error(ErrorKind::DimensionMismatch, "mean_pool: region and query dims differ");
  return ad::mean_rows(ad::concat_rows(regions, query));
}

// ---------------------------------------------------------------------------
// Value-level API.

inline void require_simplex(const Vector& w, double tol = 1e-12) {
  double s = 0.0;
  for (double x : w) {
    if (!(x >= 0.0)) throw Error(ErrorKind::SimplexViolation, "attention weight is negative or NaN");
    s += x;
  }
  if (std::abs(s - 1.0) > tol) throw Error(ErrorKind::SimplexViolation, "attention weights do not sum to 1");
}

inline AttentionWeights score_regions(const RegionFeatures& v, const Scorer& scorer) {
  if (v.rows() == 0) throw Error(ErrorKind::DimensionMismatch, "score_regions: no regions");
  Tape t;
  return Vector::from_row(score_regions(t, t.constant(v), scorer).value());
}

inline Vector global_fuse(const RegionFeatures& v, const AttentionWeights& w) {
  if (w.size() != v.rows()) throw Error(ErrorKind::DimensionMismatch, "global_fuse: weight count mismatch");
  Tape t;
  return Vector::from_row(global_fuse(t.constant(v), t.constant(w.as_row())).value());
}

template <class Rng>
RegionFeatures dae_forward(const RegionFeatures& v, const DaeParams& p, bool training, Rng& rng) {
  Tape t;
  return dae_forward(t, t.constant(v), p, training, rng).value();
}

inline RegionFeatures enhance(const RegionFeatures& denoised, const Vector& global) {
  Tape t;
  return enhance(t.constant(denoised), t.constant(global.as_row())).value();
}

inline double gonf_loss(const RegionFeatures& v, const RegionFeatures& denoised, const AttentionWeights& w,
                        double theta1, EntropySign sign = EntropySign::AsPrinted) {
  require_simplex(w);
  Tape t;
  return gonf_loss(t.constant(v), t.constant(denoised), t.constant(w.as_row()), theta1, sign).scalar();
}

inline Vector encode_multimodal(const RegionFeatures& enhanced, const QueryEmbedding& q, const EncoderParams& enc) {
  Tape t;
  return Vector::from_row(encode_multimodal(t, t.constant(enhanced), t.constant(q), enc).value());
}

/// Full filtering pass: scores, global feature, denoised and enhanced regions.
template <class Rng>
GonfOutput filter(const RegionFeatures& v, const Scorer& scorer, const DaeParams& dae, bool training, Rng& rng) {
  Tape t;
  Var x = t.constant(v);
  Var w = score_regions(t, x, scorer);
  Var g = global_fuse(x, w);
  Var den = dae_forward(t, x, dae, training, rng);
  Var enh = enhance(den, g);
  return {Vector::from_row(w.value()), Vector::from_row(g.value()), den.value(), enh.value()};
}

}  // namespace macvqa::gonf
