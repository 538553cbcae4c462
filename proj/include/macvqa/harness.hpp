#pragma once

// Continual training loop with rehearsal, evaluation into accuracy matrices,
// checkpointing and multi-seed experiments.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "macvqa/buffer.hpp"
#include "macvqa/datagen.hpp"
#include "macvqa/metrics.hpp"
#include "macvqa/model.hpp"
#include "macvqa/optim.hpp"

namespace macvqa {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t epochs = 1;
  double clip_norm = 5.0;
  double warmup_ratio = 0.1;
  std::size_t buffer_capacity = 200;  // rehearsal samples; 0 disables replay
};

struct ModelState {
  Model model;
  ama::MemoryPool pool;
  Adam optimizer;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::mt19937_64 rng;

  static ModelState init(const ModelConfig& mc, const TrainConfig& tc, std::uint64_t seed,
                         std::uint64_t total_steps = 0) {
    ModelState s;
    s.seed = seed;
    s.rng.seed(seed);
    s.model = Model::random(mc, s.rng);
    s.pool = ama::MemoryPool(mc.pool_capacity, mc.lambda);
    s.optimizer = Adam(AdamConfig{tc.lr, 0.9, 0.999, 1e-8, tc.clip_norm, tc.warmup_ratio, total_steps});
    return s;
  }
};

inline std::uint64_t total_steps(const datagen::Stream& s, const TrainConfig& tc) {
  std::uint64_t n = 0;
  for (const auto& t : s.tasks) n += t.train.size() * tc.epochs;
  return n;
}

/// Per-call record of what train_task did.
struct TrainStats {
  std::vector<double> losses;  // total loss of each optimizer step (current sample)
  std::size_t steps = 0;
  std::size_t replays = 0;
  std::size_t pool_writes = 0;
  std::size_t filtered = 0;  // forwards through the filtering path
  std::size_t fused = 0;     // forwards that fused retrieved prototypes
};

/// Trains on one task: every step uses the current sample plus, when the
/// buffer is non-empty, one uniformly drawn replay sample. After each step the
/// current sample's projected features are written to the prototype pool and
/// (in the first epoch) offered to the rehearsal buffer.
inline TrainStats train_task(ModelState& st, const datagen::TaskSpec& task, RehearsalBuffer& buffer,
                             const ModelConfig& mc, const TrainConfig& tc) {
  TrainStats stats;
  auto params = st.model.active_parameters(mc);
  std::vector<std::size_t> order(task.train.size());
  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), st.rng);
    for (std::size_t idx : order) {
      const auto& sample = task.train[idx];
      try {
        for (Parameter* p : params) p->zero_grad();
        std::vector<const datagen::Sample*> batch{&sample};
        if (!buffer.empty()) {
          batch.push_back(&buffer.draw(st.rng));
          ++stats.replays;
        }
        const double inv = 1.0 / static_cast<double>(batch.size());
        std::optional<Vector> h_v, h_q;
        for (std::size_t b = 0; b < batch.size(); ++b) {
          Tape t;
          Forward f = forward(t, st.model, mc, st.pool, *batch[b], true, st.rng);
          if (!std::isfinite(f.total.scalar())) throw Error(ErrorKind::NonFinite, "loss is not finite");
          t.backward(ad::scale(f.total, inv));
          if (mc.enable_gonf) ++stats.filtered;
          if (f.retrieval) ++stats.fused;
          if (b == 0) {
            stats.losses.push_back(f.total.scalar());
            if (f.h_v) {
              h_v = Vector::from_row(f.h_v->value());
              h_q = Vector::from_row(f.h_q->value());
            }
          }
        }
        st.optimizer.step(params);
        for (const Parameter* p : params)
          if (!p->value.all_finite()) throw Error(ErrorKind::NonFinite, p->name + " became non-finite");
        if (mc.enable_ama && h_v && norm(h_v->span()) >= kMinNorm && norm(h_q->span()) >= kMinNorm) {
          ama::admit_or_update(st.pool, *h_v, *h_q, mc.lambda, mc.sim_threshold);
          ++stats.pool_writes;
        }
        if (epoch == 0) buffer.offer(sample, st.rng);
      } catch (const Error& e) {
        throw Error(ErrorKind::Numerical, "step " + std::to_string(st.step) + ": " + e.what());
      }
      ++st.step;
      ++stats.steps;
    }
  }
  return stats;
}

/// Fraction of samples whose greedy answer matches the truth at every non-pad step.
inline double evaluate(const ModelState& st, const std::vector<datagen::Sample>& test, const ModelConfig& mc) {
  if (test.empty()) throw Error(ErrorKind::EmptyTestSet, "evaluation set is empty");
  std::mt19937_64 rng(st.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t hits = 0;
  for (const auto& s : test) {
    const auto pred = predict(st.model, mc, st.pool, s, rng);
    bool ok = true;
    for (std::size_t i = 0; i < s.answer.tokens.size(); ++i)
      if (s.answer.tokens[i] != decoder::kPad && pred.tokens[i] != s.answer.tokens[i]) ok = false;
    hits += ok ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

// ---------------------------------------------------------------------------
// Checkpoints.

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json save_checkpoint(const ModelState& st) {
  nlohmann::json params = nlohmann::json::object();
  auto& model = const_cast<Model&>(st.model);
  for (const Parameter* p : model.all_parameters())
    params[p->name] = {{"rows", p->value.rows()}, {"cols", p->value.cols()}, {"data", p->value.values()}};
  std::ostringstream rng;
  rng << st.rng;
  return {{"version", kCheckpointVersion},
          {"seed", st.seed},
          {"step", st.step},
          {"rng", rng.str()},
          {"dae_noise", st.model.dae.noise_std},
          {"params", params},
          {"pool", st.pool},
          {"optimizer", st.optimizer.to_json()}};
}

inline ModelState load_checkpoint(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kCheckpointVersion)
    throw Error(ErrorKind::ParseError, "unsupported checkpoint version");
  ModelState st;
  st.seed = j.at("seed").get<std::uint64_t>();
  st.step = j.at("step").get<std::uint64_t>();
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> st.rng;
  st.model.dae.noise_std = j.at("dae_noise").get<double>();
  for (Parameter* p : st.model.all_parameters()) {
    const auto& e = j.at("params").at(p->name);
    p->reset(Matrix(e.at("rows").get<std::size_t>(), e.at("cols").get<std::size_t>(),
                    e.at("data").get<std::vector<double>>()));
  }
  st.pool = j.at("pool").get<ama::MemoryPool>();
  st.optimizer = Adam::from_json(j.at("optimizer"));
  return st;
}

// ---------------------------------------------------------------------------
// Experiments.

struct SeedResult {
  std::uint64_t seed = 0;
  AccuracyMatrix standard;
  AccuracyMatrix novel;
  bool has_novel = false;
  double ap = 0.0;
  std::optional<double> af;
  std::optional<double> ap_novel;
  std::optional<double> af_novel;
  TrainStats stats;  // accumulated over all tasks
};

struct Aggregate {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (0 for a single seed)
};

inline std::optional<Aggregate> aggregate(const std::vector<std::optional<double>>& xs) {
  std::vector<double> v;
  for (const auto& x : xs)
    if (x) v.push_back(*x);
  if (v.empty() || v.size() != xs.size()) return std::nullopt;
  Aggregate a;
  for (double x : v) a.mean += x;
  a.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return a;
}

struct ExperimentResult {
  std::vector<SeedResult> per_seed;
  std::optional<Aggregate> ap, af, ap_novel, af_novel;
};

/// Sequential training over every task for one seed, evaluating all seen tasks
/// on both test paradigms after each task.
inline SeedResult run_seed(const ModelConfig& mc, const TrainConfig& tc, const datagen::Stream& stream,
                           std::uint64_t seed) {
  const std::size_t n = stream.tasks.size();
  if (n == 0) throw Error(ErrorKind::ConfigInvalid, "stream has no tasks");
  SeedResult r;
  r.seed = seed;
  r.standard = AccuracyMatrix(n);
  r.novel = AccuracyMatrix(n);
  r.has_novel = std::all_of(stream.tasks.begin(), stream.tasks.end(), [](const auto& t) { return !t.novel.empty(); });

  ModelState st = ModelState::init(mc, tc, seed, total_steps(stream, tc));
  RehearsalBuffer buffer(tc.buffer_capacity);
  for (std::size_t l = 0; l < n; ++l) {
    const auto s = train_task(st, stream.tasks[l], buffer, mc, tc);
    r.stats.losses.insert(r.stats.losses.end(), s.losses.begin(), s.losses.end());
    r.stats.steps += s.steps;
    r.stats.replays += s.replays;
    r.stats.pool_writes += s.pool_writes;
    r.stats.filtered += s.filtered;
    r.stats.fused += s.fused;
    for (std::size_t j = 0; j <= l; ++j) {
      r.standard.set(l, j, evaluate(st, stream.tasks[j].test, mc));
      if (r.has_novel) r.novel.set(l, j, evaluate(st, stream.tasks[j].novel, mc));
    }
  }
  r.ap = compute_ap(r.standard);
  if (n >= 2) r.af = compute_af(r.standard);
  if (r.has_novel) {
    r.ap_novel = compute_ap(r.novel);
    if (n >= 2) r.af_novel = compute_af(r.novel);
  }
  return r;
}

/// Runs every seed (up to `jobs` concurrently) and aggregates mean ± std.
inline ExperimentResult run_experiment(const ModelConfig& mc, const TrainConfig& tc, const datagen::Stream& stream,
                                       const std::vector<std::uint64_t>& seeds, std::size_t jobs = 1) {
  ExperimentResult out;
  out.per_seed.resize(seeds.size());
  jobs = std::max<std::size_t>(1, std::min(jobs, seeds.size()));
  std::vector<std::exception_ptr> errors(seeds.size());
  for (std::size_t base = 0; base < seeds.size(); base += jobs) {
    std::vector<std::thread> workers;
    for (std::size_t i = base; i < std::min(base + jobs, seeds.size()); ++i) {
      auto work = [&, i] {
        try {
          out.per_seed[i] = run_seed(mc, tc, stream, seeds[i]);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      };
      if (jobs == 1) {
        work();
      } else {
        workers.emplace_back(work);
      }
    }
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  std::vector<std::optional<double>> ap, af, apn, afn;
  for (const auto& r : out.per_seed) {
    ap.emplace_back(r.ap);
    af.push_back(r.af);
    apn.push_back(r.ap_novel);
    afn.push_back(r.af_novel);
  }
  out.ap = aggregate(ap);
  out.af = aggregate(af);
  out.ap_novel = aggregate(apn);
  out.af_novel = aggregate(afn);
  return out;
}

}  // namespace macvqa
