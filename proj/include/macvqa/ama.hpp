#pragma once

// Adaptive memory allocation: modality projections, a capacity-bounded
// prototype pool with top-k cosine retrieval, gated prototype fusion,
// temporal-interpolation updates and the memory loss.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "macvqa/attention.hpp"
#include "macvqa/linalg.hpp"
#include "macvqa/tape.hpp"

namespace macvqa::ama {

enum class Modality { Visual, Textual };
enum class Strategy { MaxSimilarity, Random };

inline std::string to_string(Strategy s) { return s == Strategy::MaxSimilarity ? "max_similarity" : "random"; }
inline Strategy strategy_from_string(const std::string& s) {
  if (s == "max_similarity") return Strategy::MaxSimilarity;
  if (s == "random") return Strategy::Random;
  throw Error(ErrorKind::ConfigInvalid, "unknown retrieval strategy '" + s + "'");
}

/// W_v, W_q: d×d maps into the visual and textual prototype spaces.
struct ModalityProjections {
  Parameter w_v{"ama.proj.w_v", Matrix{}};
  Parameter w_q{"ama.proj.w_q", Matrix{}};

  ModalityProjections() = default;
  explicit ModalityProjections(std::size_t d) {
    w_v.reset(Matrix(d, d));
    w_q.reset(Matrix(d, d));
  }
  template <class Rng>
  static ModalityProjections random(std::size_t d, Rng& rng) {
    ModalityProjections p;
    p.w_v.reset(uniform_init(d, d, d, rng));
    p.w_q.reset(uniform_init(d, d, d, rng));
    return p;
  }
};

/// Gate matrix W_g (2×3d) and the prototype weighting maps W_α, W_β (d×d).
struct FusionParams {
  Parameter w_g{"ama.gate.w_g", Matrix{}};
  Parameter w_alpha{"ama.fuse.w_alpha", Matrix{}};
  Parameter w_beta{"ama.fuse.w_beta", Matrix{}};

  FusionParams() = default;
  explicit FusionParams(std::size_t d) {
    w_g.reset(Matrix(2, 3 * d));
    w_alpha.reset(Matrix(d, d));
    w_beta.reset(Matrix(d, d));
  }
  template <class Rng>
  static FusionParams random(std::size_t d, Rng& rng) {
    FusionParams p;
    p.w_g.reset(uniform_init(2, 3 * d, 3 * d, rng));
    p.w_alpha.reset(uniform_init(d, d, d, rng));
    p.w_beta.reset(uniform_init(d, d, d, rng));
    return p;
  }
};

struct Prototype {
  Vector value;
  std::uint64_t last_update = 0;

  friend bool operator==(const Prototype&, const Prototype&) = default;
};

/// Two capacity-bounded prototype sets (visual, textual) with an update clock.
class MemoryPool {
 public:
  MemoryPool() = default;
  MemoryPool(std::size_t capacity, double lambda) : capacity_(capacity), lambda_(lambda) {
    if (capacity == 0) throw Error(ErrorKind::ConfigInvalid, "pool capacity must be >= 1");
    check_lambda(lambda);
  }

  std::size_t capacity() const noexcept { return capacity_; }
  double lambda() const noexcept { return lambda_; }
  std::uint64_t clock() const noexcept { return clock_; }

  const std::vector<Prototype>& prototypes(Modality m) const { return m == Modality::Visual ? visual_ : textual_; }
  std::size_t size(Modality m) const { return prototypes(m).size(); }
  bool empty() const { return visual_.empty() && textual_.empty(); }

  /// P ← λP + (1−λ)h for one stored prototype.
  void update(Modality m, std::size_t index, const Vector& h, double lambda) {
    check_lambda(lambda);
    auto& set = mut(m);
    if (index >= set.size())
      throw Error(ErrorKind::IndexOutOfRange, "prototype index " + std::to_string(index) + " out of range");
    auto& p = set[index].value;
    if (p.size() != h.size()) throw Error(ErrorKind::DimensionMismatch, "memory_update: feature dim mismatch");
    Vector next(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) next[i] = lambda * p[i] + (1.0 - lambda) * h[i];
    if (norm(next.span()) < kMinNorm) throw Error(ErrorKind::ZeroVector, "memory_update would store a zero prototype");
    p = std::move(next);
    set[index].last_update = ++clock_;
  }

  /// Appends a prototype, evicting the least recently updated one when over capacity.
  void insert(Modality m, const Vector& h) {
    if (norm(h.span()) < kMinNorm) throw Error(ErrorKind::ZeroVector, "cannot store a zero-norm prototype");
    auto& set = mut(m);
    if (!set.empty() && set.front().value.size() != h.size())
      throw Error(ErrorKind::DimensionMismatch, "prototype dim mismatch");
    set.push_back({h, ++clock_});
    if (set.size() > capacity_) {
      auto oldest = std::min_element(set.begin(), set.end(),
                                     [](const Prototype& a, const Prototype& b) { return a.last_update < b.last_update; });
      set.erase(oldest);
    }
  }

  friend bool operator==(const MemoryPool&, const MemoryPool&) = default;

  friend void to_json(nlohmann::json& j, const MemoryPool& p);
  friend void from_json(const nlohmann::json& j, MemoryPool& p);

 private:
  static void check_lambda(double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw Error(ErrorKind::LambdaOutOfRange, "lambda must lie in [0,1]");
  }
  std::vector<Prototype>& mut(Modality m) { return m == Modality::Visual ? visual_ : textual_; }

  std::size_t capacity_ = 1;
  double lambda_ = 0.9;
  std::uint64_t clock_ = 0;
  std::vector<Prototype> visual_;
  std::vector<Prototype> textual_;
};

inline constexpr int kPoolFormatVersion = 1;

// Doubles are written as the shortest decimal that parses back to the same
// bits, so a checkpoint round-trip is exact.
inline void to_json(nlohmann::json& j, const MemoryPool& p) {
  auto set = [](const std::vector<Prototype>& s) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& proto : s) a.push_back({{"value", proto.value.values()}, {"last_update", proto.last_update}});
    return a;
  };
  j = {{"version", kPoolFormatVersion}, {"capacity", p.capacity_}, {"lambda", p.lambda_}, {"clock", p.clock_},
       {"visual", set(p.visual_)}, {"textual", set(p.textual_)}};
}

inline void from_json(const nlohmann::json& j, MemoryPool& p) {
  if (j.at("version").get<int>() != kPoolFormatVersion)
    throw Error(ErrorKind::ParseError, "unsupported pool format version");
  MemoryPool out(j.at("capacity").get<std::size_t>(), j.at("lambda").get<double>());
  out.clock_ = j.at("clock").get<std::uint64_t>();
  auto read = [](const nlohmann::json& a, std::vector<Prototype>& s) {
    for (const auto& e : a) {
      Prototype proto{Vector(e.at("value").get<std::vector<double>>()), e.at("last_update").get<std::uint64_t>()};
      if (norm(proto.value.span()) < kMinNorm) throw Error(ErrorKind::ZeroVector, "checkpoint holds a zero prototype");
      s.push_back(std::move(proto));
    }
  };
  read(j.at("visual"), out.visual_);
  read(j.at("textual"), out.textual_);
  if (out.visual_.size() > out.capacity_ || out.textual_.size() > out.capacity_)
    throw Error(ErrorKind::ParseError, "checkpoint pool exceeds its capacity");
  p = std::move(out);
}

struct RetrievalResult {
  std::vector<std::size_t> visual_indices;
  std::vector<double> visual_scores;
  std::vector<std::size_t> textual_indices;
  std::vector<double> textual_scores;
  Vector v_p;  // mean of the retrieved visual prototypes
  Vector q_p;  // mean of the retrieved textual prototypes
};

struct GateState {
  double g_v = 0.5;
  double g_q = 0.5;
};

// ---------------------------------------------------------------------------
// Value-level operations.

inline std::pair<Vector, Vector> project(const Vector& h, const ModalityProjections& p) {
  return {matvec(p.w_v.value, h), matvec(p.w_q.value, h)};
}

namespace detail {

struct Selection {
  std::vector<std::size_t> indices;
  std::vector<double> scores;
  Vector mean;
};

template <class Rng>
Selection select(const Vector& query, const std::vector<Prototype>& set, std::size_t k, Strategy strategy, Rng& rng) {
  if (set.empty()) throw Error(ErrorKind::EmptyPool, "retrieval from an empty prototype set");
  if (k == 0 || k > set.size())
    throw Error(ErrorKind::KTooLarge, "k=" + std::to_string(k) + " with " + std::to_string(set.size()) + " prototypes");
  if (norm(query.span()) < kMinNorm) throw Error(ErrorKind::ZeroVector, "retrieval query has zero norm");

  std::vector<double> sims(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) sims[i] = cosine_sim(query, set[i].value);

  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (strategy == Strategy::Random) {
    // Partial Fisher-Yates: first k entries are a uniform k-subset.
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(k);
  }
  auto by_score = [&](std::size_t a, std::size_t b) { return sims[a] != sims[b] ? sims[a] > sims[b] : a < b; };
  if (strategy == Strategy::MaxSimilarity) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), by_score);
    idx.resize(k);
  } else {
    std::sort(idx.begin(), idx.end(), by_score);
  }

  Selection out;
  out.mean = Vector(query.size());
  for (std::size_t i : idx) {
    out.indices.push_back(i);
    out.scores.push_back(sims[i]);
    for (std::size_t j = 0; j < query.size(); ++j) out.mean[j] += set[i].value[j];
  }
  for (auto& v : out.mean) v /= static_cast<double>(k);
  return out;
}

}  // namespace detail

template <class Rng>
RetrievalResult retrieve_top_k(const Vector& h_v, const Vector& h_q, const MemoryPool& pool, std::size_t k,
                               Strategy strategy, Rng& rng) {
  auto vis = detail::select(h_v, pool.prototypes(Modality::Visual), k, strategy, rng);
  auto txt = detail::select(h_q, pool.prototypes(Modality::Textual), k, strategy, rng);
  return {std::move(vis.indices), std::move(vis.scores), std::move(txt.indices), std::move(txt.scores),
          std::move(vis.mean), std::move(txt.mean)};
}

inline void memory_update(MemoryPool& pool, const Vector& h, double lambda, Modality m, std::size_t index) {
  pool.update(m, index, h, lambda);
}

/// Per modality: interpolate into the best-matching prototype when its
/// similarity reaches the threshold, otherwise store the feature as new.
inline void admit_or_update(MemoryPool& pool, const Vector& h_v, const Vector& h_q, double lambda,
                            double sim_threshold) {
  if (norm(h_v.span()) < kMinNorm || norm(h_q.span()) < kMinNorm)
    throw Error(ErrorKind::ZeroVector, "admit_or_update with a zero-norm feature");
  for (auto [m, h] : {std::pair{Modality::Visual, &h_v}, std::pair{Modality::Textual, &h_q}}) {
    const auto& set = pool.prototypes(m);
    std::optional<std::size_t> best;
    double best_sim = -2.0;
    for (std::size_t i = 0; i < set.size(); ++i) {
      const double s = cosine_sim(*h, set[i].value);
      if (s > best_sim) {
        best_sim = s;
        best = i;
      }
    }
    if (best && best_sim >= sim_threshold) {
      pool.update(m, *best, *h, lambda);
    } else {
      pool.insert(m, *h);
    }
  }
}

inline GateState gate(const Vector& h, const Vector& q_p, const Vector& v_p, const Matrix& w_g) {
  if (w_g.rows() != 2 || w_g.cols() != h.size() + q_p.size() + v_p.size())
    throw Error(ErrorKind::DimensionMismatch, "gate: W_g must be 2 x (d + d_q + d_v)");
  std::vector<double> cat = h.values();
  cat.insert(cat.end(), q_p.begin(), q_p.end());
  cat.insert(cat.end(), v_p.begin(), v_p.end());
  Vector g = sigmoid(matvec(w_g, Vector(std::move(cat))));
  return {g[0], g[1]};
}

// ---------------------------------------------------------------------------
// Tape-level operations (vectors are 1×d rows).

/// g = σ(W_g [h; q_p; v_p]) as a 1×2 row (g_v, g_q).
template <class P>
Var gate(Tape& t, Var h, Var q_p, Var v_p, P& w_g) {
  if (w_g.value.rows() != 2 || w_g.value.cols() != h.cols() + q_p.cols() + v_p.cols())
    throw Error(ErrorKind::DimensionMismatch, "gate: W_g must be 2 x (d + d_q + d_v)");
  return ad::sigmoid(ad::linear(ad::concat_cols(ad::concat_cols(h, q_p), v_p), bind(t, w_g)));
}

/// H′ = H + α⊙Q_p + β⊙V_p with α = g_v·softmax(W_α V_p), β = g_q·softmax(W_β Q_p).
/// `g` is the 1×2 gate row (g_v, g_q).
template <class P>
Var fuse(Tape& t, Var h, Var q_p, Var v_p, Var g, P& w_alpha, P& w_beta) {
  if (h.cols() != q_p.cols() || h.cols() != v_p.cols())
    throw Error(ErrorKind::DimensionMismatch, "fuse: H, Q_p and V_p must share one dimension");
  if (g.rows() != 1 || g.cols() != 2) throw Error(ErrorKind::DimensionMismatch, "fuse: gate must be 1x2");
  Var alpha = ad::scale_by(ad::softmax_rows(ad::linear(v_p, bind(t, w_alpha))), ad::pick(g, 0, 0));
  Var beta = ad::scale_by(ad::softmax_rows(ad::linear(q_p, bind(t, w_beta))), ad::pick(g, 0, 1));
  return ad::add(ad::add(h, ad::hadamard(alpha, q_p)), ad::hadamard(beta, v_p));
}

/// Memory loss; similarities flow into h_v/h_q only, stored prototypes are constants.
inline Var ama_loss(Tape& t, Var h_v, Var h_q, const MemoryPool& pool, const RetrievalResult& r, Var g, Var h,
                    Var h_fused, double theta2, double theta3) {
  Var loss = t.constant(Matrix(1, 1));
  for (std::size_t i : r.visual_indices)
    loss = ad::sub(loss, ad::cosine(h_v, t.constant(pool.prototypes(Modality::Visual)[i].value.as_row())));
  for (std::size_t i : r.textual_indices)
    loss = ad::sub(loss, ad::cosine(h_q, t.constant(pool.prototypes(Modality::Textual)[i].value.as_row())));
  Var gate_sum = ad::shift(ad::sum(g), -1.0);
  loss = ad::add(loss, ad::scale(ad::sum_sq(gate_sum), theta2));
  return ad::add(loss, ad::scale(ad::sum_sq(ad::sub(h_fused, h)), theta3));
}

// ---------------------------------------------------------------------------
// Value-level wrappers over the tape operations.

inline Vector fuse(const Vector& h, const Vector& q_p, const Vector& v_p, const GateState& g, const Matrix& w_alpha,
                   const Matrix& w_beta) {
  Tape t;
  const Parameter pa("w_alpha", w_alpha), pb("w_beta", w_beta);
  Var gv = t.constant(Matrix{{g.g_v, g.g_q}});
  return Vector::from_row(
      fuse(t, t.constant(h.as_row()), t.constant(q_p.as_row()), t.constant(v_p.as_row()), gv, pa, pb).value());
}

/// L = −Σ sim_v − Σ sim_q + θ2 (g_q + g_v − 1)² + θ3 ‖H′ − H‖².
inline double ama_loss(const RetrievalResult& r, const GateState& g, const Vector& h, const Vector& h_fused,
                       double theta2, double theta3) {
  if (h.size() != h_fused.size()) throw Error(ErrorKind::DimensionMismatch, "ama_loss: H and H' differ in length");
  double loss = 0.0;
  for (double s : r.visual_scores) loss -= s;
  for (double s : r.textual_scores) loss -= s;
  const double gs = g.g_q + g.g_v - 1.0;
  loss += theta2 * gs * gs;
  double drift = 0.0;
  for (std::size_t i = 0; i < h.size(); ++i) drift += (h_fused[i] - h[i]) * (h_fused[i] - h[i]);
  return loss + theta3 * drift;
}

}  // namespace macvqa::ama
