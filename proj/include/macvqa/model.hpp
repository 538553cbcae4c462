#pragma once

// End-to-end per-sample pipeline: filtering -> encoder -> memory fusion ->
// decoder, producing the three module losses and their weighted total.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "macvqa/ama.hpp"
#include "macvqa/datagen.hpp"
#include "macvqa/decoder.hpp"
#include "macvqa/gonf.hpp"

namespace macvqa {

struct ModelConfig {
  datagen::Dims dims;
  std::size_t d_e = 32;
  std::size_t d_att = 32;
  std::size_t dae_hidden = 0;  // 0: ceil(d/2)
  double dae_noise = 0.1;

  bool enable_gonf = true;
  bool enable_ama = true;
  ama::Strategy strategy = ama::Strategy::MaxSimilarity;
  std::size_t k = 3;
  double lambda = 0.9;
  std::size_t pool_capacity = 50;
  double sim_threshold = 0.7;

  double theta1 = 0.3;
  double theta2 = 0.1;
  double theta3 = 0.1;
  decoder::LossWeights phi{0.3, 0.2, 0.5};
  gonf::EntropySign entropy_sign = gonf::EntropySign::AsPrinted;

  /// Fixed (g_v, g_q) replacing the learned gate, for α/β sensitivity runs.
  std::optional<std::pair<double, double>> gate_override;

  std::size_t hidden() const { return dae_hidden ? dae_hidden : gonf::default_hidden(dims.d); }

  /// φ restricted to the enabled modules and renormalized to sum to one.
  decoder::LossWeights effective_phi() const {
    decoder::LossWeights w{enable_gonf ? phi[0] : 0.0, enable_ama ? phi[1] : 0.0, phi[2]};
    const double s = w[0] + w[1] + w[2];
    if (s <= 0.0) return {0.0, 0.0, 1.0};
    for (auto& x : w) x /= s;
    return w;
  }
};

struct Model {
  gonf::Scorer scorer;
  gonf::DaeParams dae;
  gonf::EncoderParams encoder;
  ama::ModalityProjections proj;
  ama::FusionParams fusion;
  decoder::DecoderParams dec;

  template <class Rng>
  static Model random(const ModelConfig& c, Rng& rng) {
    const auto& dm = c.dims;
    Model m;
    m.scorer = gonf::Scorer::random(dm.d, rng);
    m.dae = gonf::DaeParams::random(dm.d, c.hidden(), c.dae_noise, rng);
    m.encoder = gonf::EncoderParams::random(dm.d, rng);
    m.proj = ama::ModalityProjections::random(dm.d, rng);
    m.fusion = ama::FusionParams::random(dm.d, rng);
    m.dec = decoder::DecoderParams::random(dm.d, c.d_e, c.d_att, dm.vocab, dm.T, rng);
    return m;
  }

  std::vector<Parameter*> all_parameters() {
    return {&scorer.weight, &scorer.bias, &dae.enc_w,      &dae.enc_b,       &dae.dec_w,      &dae.dec_b,
            &encoder.wq,    &encoder.wk,  &encoder.wv,     &proj.w_v,        &proj.w_q,       &fusion.w_g,
            &fusion.w_alpha, &fusion.w_beta, &dec.proj_v,  &dec.proj_q,      &dec.tok_emb,    &dec.pos_emb,
            &dec.att_q,     &dec.att_k,   &dec.att_v,      &dec.out_w,       &dec.out_b};
  }

  /// Parameters that the configured pipeline actually touches.
  std::vector<Parameter*> active_parameters(const ModelConfig& c) {
    std::vector<Parameter*> out;
    for (Parameter* p : all_parameters()) {
      const bool is_gonf = p->name.starts_with("gonf.") || p->name.starts_with("encoder.");
      const bool is_ama = p->name.starts_with("ama.");
      if (is_gonf && !c.enable_gonf) continue;
      if (is_ama && !c.enable_ama) continue;
      if (p->name == "ama.gate.w_g" && c.gate_override) continue;
      out.push_back(p);
    }
    return out;
  }
};

/// Nodes of one forward pass. Optional losses are absent when their module is off.
struct Forward {
  Var h;
  Var h_fused;
  std::optional<Var> h_v, h_q;
  std::optional<Var> l_gonf, l_ama;
  Var l_dec;
  Var total;
  std::optional<ama::RetrievalResult> retrieval;
  Var e;
};

/// Builds the full pipeline for one sample on `t`. Passing a const Model puts
/// every parameter on the tape as a constant. `rng` feeds DAE corruption and
/// random retrieval.
template <class M, class Rng>
Forward forward(Tape& t, M& m, const ModelConfig& c, const ama::MemoryPool& pool, const datagen::Sample& s,
                bool training, Rng& rng) {
  Forward f;
  Var v = t.constant(s.regions);
  Var q = t.constant(s.query);

  if (c.enable_gonf) {
    Var w = gonf::score_regions(t, v, m.scorer);
    Var g = gonf::global_fuse(v, w);
    Var den = gonf::dae_forward(t, v, m.dae, training, rng);
    Var enh = gonf::enhance(den, g);
    f.h = gonf::encode_multimodal(t, enh, q, m.encoder);
    f.l_gonf = gonf::gonf_loss(v, den, w, c.theta1, c.entropy_sign);
  } else {
    f.h = gonf::mean_pool(v, q);
  }

  f.h_fused = f.h;
  if (c.enable_ama) {
    f.h_v = ad::linear(f.h, bind(t, m.proj.w_v));
    f.h_q = ad::linear(f.h, bind(t, m.proj.w_q));
    const std::size_t avail =
        std::min(pool.size(ama::Modality::Visual), pool.size(ama::Modality::Textual));
    const bool usable = avail > 0 && norm(f.h_v->value().values()) >= kMinNorm &&
                        norm(f.h_q->value().values()) >= kMinNorm;
    if (usable) {
      f.retrieval = ama::retrieve_top_k(Vector::from_row(f.h_v->value()), Vector::from_row(f.h_q->value()), pool,
                                        std::min(c.k, avail), c.strategy, rng);
      Var v_p = t.constant(f.retrieval->v_p.as_row());
      Var q_p = t.constant(f.retrieval->q_p.as_row());
      Var g = c.gate_override ? t.constant(Matrix{{c.gate_override->first, c.gate_override->second}})
                              : ama::gate(t, f.h, q_p, v_p, m.fusion.w_g);
      f.h_fused = ama::fuse(t, f.h, q_p, v_p, g, m.fusion.w_alpha, m.fusion.w_beta);
      f.l_ama = ama::ama_loss(t, *f.h_v, *f.h_q, pool, *f.retrieval, g, f.h, f.h_fused, c.theta2, c.theta3);
    } else {
      f.l_ama = t.constant(Matrix(1, 1));
    }
  }

  f.e = decoder::project_and_concat(t, f.h_fused, m.dec);
  f.l_dec = decoder::decode_loss(t, f.e, s.answer, m.dec);

  const auto phi = c.effective_phi();
  Var zero = t.constant(Matrix(1, 1));
  f.total = decoder::total_loss(f.l_gonf.value_or(zero), f.l_ama.value_or(zero), f.l_dec, phi);
  return f;
}

/// Greedy answer for one sample; no parameter or pool changes.
template <class Rng>
decoder::AnswerSequence predict(const Model& m, const ModelConfig& c, const ama::MemoryPool& pool,
                                const datagen::Sample& s, Rng& rng) {
  Tape t;
  Forward f = forward(t, m, c, pool, s, false, rng);
  return decoder::greedy_decode(t, f.e, m.dec);
}

}  // namespace macvqa
