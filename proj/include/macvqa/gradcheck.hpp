#pragma once

// Central finite-difference verification of tape gradients, grouped by loss
// term and parameter group.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "macvqa/model.hpp"

namespace macvqa {

struct GradcheckOptions {
  double step = 1e-5;
  double abs_tol = 1e-4;
  double rel_tol = 1e-3;
  /// Test hook: analytic gradients of this group are deliberately perturbed.
  std::optional<std::string> corrupt_group;
};

struct GradcheckRow {
  std::string loss;
  std::string group;
  std::size_t entries = 0;
  double max_abs = 0.0;
  double max_rel = 0.0;
  bool pass = true;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;

  bool pass() const {
    return std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.pass; });
  }
  std::vector<std::string> failing() const {
    std::vector<std::string> out;
    for (const auto& r : rows)
      if (!r.pass) out.push_back(r.loss + "/" + r.group);
    return out;
  }
  void append(const GradcheckReport& o) { rows.insert(rows.end(), o.rows.begin(), o.rows.end()); }
};

/// "gonf.dae.enc_w" -> "gonf.dae".
inline std::string parameter_group(const std::string& name) {
  const auto dot = name.rfind('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

/// A differentiable problem: `eval` returns every loss value, `backprop(i)`
/// accumulates the analytic gradient of loss i into the parameters.
struct GradProblem {
  std::vector<Parameter*> params;
  std::vector<std::string> loss_names;
  std::function<std::vector<double>()> eval;
  std::function<void(std::size_t)> backprop;
};

/// Rows are emitted only for (loss, group) pairs the loss actually depends on.
/// An empty parameter list passes vacuously.
inline GradcheckReport gradcheck(const GradProblem& prob, const GradcheckOptions& opt = {}) {
  GradcheckReport rep;
  const std::size_t nl = prob.loss_names.size();
  if (prob.params.empty() || nl == 0) return rep;

  // analytic[l][p] for every loss and parameter.
  std::vector<std::vector<Matrix>> analytic(nl);
  for (std::size_t l = 0; l < nl; ++l) {
    for (Parameter* p : prob.params) p->zero_grad();
    prob.backprop(l);
    for (Parameter* p : prob.params) {
      Matrix g = p->grad;
      if (opt.corrupt_group && parameter_group(p->name) == *opt.corrupt_group)
        for (auto& x : g.values()) x = 2.0 * x + 0.5;
      analytic[l].push_back(std::move(g));
    }
  }

  std::map<std::pair<std::size_t, std::string>, GradcheckRow> acc;
  std::map<std::pair<std::size_t, std::string>, bool> touched;
  for (std::size_t pi = 0; pi < prob.params.size(); ++pi) {
    Parameter* p = prob.params[pi];
    const std::string group = parameter_group(p->name);
    auto& vals = p->value.values();
    for (std::size_t e = 0; e < vals.size(); ++e) {
      const double orig = vals[e];
      vals[e] = orig + opt.step;
      const auto up = prob.eval();
      vals[e] = orig - opt.step;
      const auto down = prob.eval();
      vals[e] = orig;
      for (std::size_t l = 0; l < nl; ++l) {
        const double num = (up[l] - down[l]) / (2.0 * opt.step);
        const double ana = analytic[l][pi].values()[e];
        auto key = std::pair{l, group};
        auto& row = acc[key];
        row.loss = prob.loss_names[l];
        row.group = group;
        ++row.entries;
        if (num != 0.0 || ana != 0.0) touched[key] = true;
        const double dev = std::abs(ana - num);
        const double scale = std::max(std::abs(ana), std::abs(num));
        row.max_abs = std::max(row.max_abs, dev);
        if (scale > 0.0) row.max_rel = std::max(row.max_rel, dev / scale);
        if (dev > std::max(opt.abs_tol, opt.rel_tol * scale)) row.pass = false;
      }
    }
  }
  for (std::size_t l = 0; l < nl; ++l)
    for (auto& [key, row] : acc)
      if (key.first == l && touched.contains(key)) rep.rows.push_back(row);
  return rep;
}

/// Random dense sample with a padded answer tail.
inline datagen::Sample random_sample(const datagen::Dims& dm, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  datagen::Sample s;
  s.regions = Matrix(dm.n, dm.d);
  for (auto& x : s.regions.values()) x = g(rng);
  s.query = Matrix(dm.L, dm.d);
  for (auto& x : s.query.values()) x = g(rng);
  std::uniform_int_distribution<decoder::Token> tok(1, static_cast<decoder::Token>(dm.vocab - 1));
  for (std::size_t i = 0; i < dm.T; ++i) s.answer.tokens.push_back(tok(rng));
  if (dm.T > 1) s.answer.tokens.back() = decoder::kPad;
  return s;
}

/// Checks the filtering, memory, decoder and total losses of a freshly
/// initialized model on one random sample, with a pool pre-populated by
/// random prototypes so the memory path is exercised.
inline GradcheckReport gradcheck_model(const ModelConfig& c, std::uint64_t seed, const GradcheckOptions& opt = {}) {
  std::mt19937_64 rng(seed);
  Model m = Model::random(c, rng);
  ama::MemoryPool pool(c.pool_capacity, c.lambda);
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t protos = std::min(c.pool_capacity, c.k + 2);
  for (auto mod : {ama::Modality::Visual, ama::Modality::Textual})
    for (std::size_t i = 0; i < protos; ++i) {
      Vector v(c.dims.d);
      for (auto& x : v) x = g(rng);
      pool.insert(mod, v);
    }
  const auto sample = random_sample(c.dims, rng);
  const std::uint64_t noise_seed = rng();

  std::vector<std::string> names;
  if (c.enable_gonf) names.push_back("gonf");
  if (c.enable_ama) names.push_back("ama");
  names.push_back("decoder");
  names.push_back("total");

  auto pick = [&](const Forward& f, const std::string& n) -> Var {
    if (n == "gonf") return *f.l_gonf;
    if (n == "ama") return *f.l_ama;
    if (n == "decoder") return f.l_dec;
    return f.total;
  };

  GradProblem prob;
  prob.params = m.active_parameters(c);
  prob.loss_names = names;
  // Reseeding makes DAE corruption and random retrieval identical across evaluations.
  prob.eval = [&] {
    Tape t;
    std::mt19937_64 r(noise_seed);
    const Forward f = forward(t, m, c, pool, sample, true, r);
    std::vector<double> out;
    for (const auto& n : names) out.push_back(pick(f, n).scalar());
    return out;
  };
  prob.backprop = [&](std::size_t l) {
    Tape t;
    std::mt19937_64 r(noise_seed);
    const Forward f = forward(t, m, c, pool, sample, true, r);
    t.backward(pick(f, names[l]));
  };
  return gradcheck(prob, opt);
}

}  // namespace macvqa
