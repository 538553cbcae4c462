// Acceptance suite: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>

#include "macvqa/gradcheck.hpp"
#include "macvqa/report.hpp"
#include "oracles.hpp"

using namespace macvqa;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

Matrix to_matrix(const oracle::Mat& m) {
  Matrix out(m.size(), m.empty() ? 0 : m[0].size());
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[i].size(); ++j) out(i, j) = m[i][j];
  return out;
}

double max_diff(std::span<const double> a, const oracle::Vec& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_diff(const Matrix& a, const oracle::Mat& b) {
  double m = 0.0;
  if (a.rows() != b.size()) return INFINITY;
  for (std::size_t i = 0; i < b.size(); ++i)
    for (std::size_t j = 0; j < b[i].size(); ++j) m = std::max(m, std::abs(a(i, j) - b[i][j]));
  return m;
}

Outcome gradient_suite() {
  ModelConfig mc;
  mc.dims = {8, 4, 3, 2, 5};
  mc.d_e = 8;
  mc.d_att = 8;
  mc.k = 2;
  mc.pool_capacity = 8;
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckReport rep;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) rep.append(gradcheck_model(mc, seed));
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::set<std::string> losses;
  double worst_abs = 0.0;
  for (const auto& r : rep.rows) {
    losses.insert(r.loss);
    worst_abs = std::max(worst_abs, r.max_abs);
  }
  Outcome o;
  o.pass = rep.pass() && losses.size() == 4 && secs < 60.0;
  o.detail = fmt("20 instances, %zu rows over %zu losses, max |analytic-numeric| %.2e, %zu failing, %.1fs",
                 rep.rows.size(), losses.size(), worst_abs, rep.failing().size(), secs);
  return o;
}

Outcome oracle_equivalence() {
  std::mt19937_64 rng(2024);
  const double tol = 1e-10;
  std::map<std::string, double> worst;
  auto note = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng() % 7, d = 1 + rng() % 7;
    const auto x = oracle::random_vec(n, rng, 3.0);
    note("softmax", max_diff(softmax(Vector(x)).span(), oracle::softmax(x)));

    const auto a = oracle::random_vec(d, rng), b = oracle::random_vec(d, rng);
    note("cosine", std::abs(cosine_sim(Vector(a), Vector(b)) - oracle::cosine(a, b)));

    const auto v = oracle::random_mat(n, d, rng);
    const auto w = oracle::softmax(oracle::random_vec(n, rng));
    oracle::Vec g(d, 0.0);
    for (std::size_t m = 0; m < n; ++m)
      for (std::size_t j = 0; j < d; ++j) g[j] += w[m] * v[m][j];
    note("global_fuse", max_diff(gonf::global_fuse(to_matrix(v), Vector(w)).span(), g));

    const std::size_t rq = 1 + rng() % 4, rk = 1 + rng() % 5;
    const auto q = oracle::random_mat(rq, d, rng), k = oracle::random_mat(rk, d, rng),
               vv = oracle::random_mat(rk, d, rng);
    note("cross_attention",
         max_diff(decoder::cross_attention(to_matrix(q), to_matrix(k), to_matrix(vv)), oracle::attention(q, k, vv)));

    const std::size_t size = 1 + rng() % 32, kk = 1 + rng() % size;
    ama::MemoryPool pool(size, 0.9);
    for (auto m : {ama::Modality::Visual, ama::Modality::Textual})
      for (std::size_t i = 0; i < size; ++i) pool.insert(m, Vector(oracle::random_vec(d, rng)));
    const Vector hv(oracle::random_vec(d, rng)), hq(oracle::random_vec(d, rng));
    const auto r = ama::retrieve_top_k(hv, hq, pool, kk, ama::Strategy::MaxSimilarity, rng);
    oracle::Vec sv, sq;
    for (const auto& p : pool.prototypes(ama::Modality::Visual)) sv.push_back(oracle::cosine(hv.values(), p.value.values()));
    for (const auto& p : pool.prototypes(ama::Modality::Textual)) sq.push_back(oracle::cosine(hq.values(), p.value.values()));
    const bool same = r.visual_indices == oracle::topk(sv, kk) && r.textual_indices == oracle::topk(sq, kk);
    note("top_k", same ? 0.0 : INFINITY);

    const std::size_t t = 2 + rng() % 6;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    oracle::Mat acc(t, oracle::Vec(t, 0.0));
    for (std::size_t l = 0; l < t; ++l)
      for (std::size_t j = 0; j <= l; ++j) acc[l][j] = u(rng);
    const auto am = AccuracyMatrix::from_rows(acc);
    note("AP", std::abs(compute_ap(am) - oracle::ap(acc)));
    note("AF", std::abs(compute_af(am) - oracle::af(acc)));
  }
  Outcome o;
  std::string parts;
  for (const auto& [k, e] : worst) {
    if (!(e <= tol)) o.pass = false;
    parts += (parts.empty() ? "" : ", ") + k + fmt(" %.1e", e);
  }
  o.detail = "100 instances each, max error: " + parts;
  return o;
}

Outcome closed_forms() {
  std::mt19937_64 rng(7);
  Outcome o;
  std::vector<std::string> notes;

  const Matrix v = to_matrix(oracle::random_mat(2, 5, rng));
  const double lg = gonf::gonf_loss(v, v, Vector{0.5, 0.5}, 1.0);
  const bool g_ok = std::abs(lg - std::log(2.0) / 2.0) <= 1e-15;
  notes.push_back(fmt("gonf %.15f", lg));

  const std::size_t k = 2;
  ama::RetrievalResult r;
  r.visual_scores.assign(k, 1.0);
  r.textual_scores.assign(k, 1.0);
  const Vector h{0.3, -0.2, 1.1};
  const double la = ama::ama_loss(r, {0.4, 0.6}, h, h, 0.1, 0.1);
  const bool a_ok = la == -2.0 * static_cast<double>(k);
  notes.push_back(fmt("ama %g (k=%zu)", la, k));

  decoder::DecoderParams p(3, 2, 2, 6, 2);
  const double ld = decoder::decode_loss(Vector(oracle::random_vec(4, rng)), decoder::AnswerSequence{{4, 0}}, p);
  const bool d_ok = std::abs(ld - std::log(6.0)) <= 1e-15;
  notes.push_back(fmt("decoder %.15f vs ln 6", ld));

  // Dyadic data: with lambda = 1/2 every iterate is exact, so equality is bitwise.
  bool c_ok = true;
  double worst_rel = 0.0;
  for (double lambda : {0.5, 0.25, 0.9}) {
    ama::MemoryPool pool(1, lambda);
    const Vector hh{0.5, -1.25, 2.0}, p0{4.0, 1.0, -3.0};
    pool.insert(ama::Modality::Visual, p0);
    double d0 = 0.0;
    for (std::size_t j = 0; j < 3; ++j) d0 += (p0[j] - hh[j]) * (p0[j] - hh[j]);
    d0 = std::sqrt(d0);
    for (int i = 1; i <= 20; ++i) {
      ama::memory_update(pool, hh, lambda, ama::Modality::Visual, 0);
      const auto& pi = pool.prototypes(ama::Modality::Visual)[0].value;
      double di = 0.0;
      for (std::size_t j = 0; j < 3; ++j) di += (pi[j] - hh[j]) * (pi[j] - hh[j]);
      di = std::sqrt(di);
      const double want = std::pow(lambda, i) * d0;
      const double rel = std::abs(di - want) / want;
      worst_rel = std::max(worst_rel, rel);
      if (lambda == 0.5 ? di != want : rel > 1e-12) c_ok = false;
    }
  }
  notes.push_back(fmt("contraction max rel %.1e", worst_rel));

  o.pass = g_ok && a_ok && d_ok && c_ok;
  for (const auto& n : notes) o.detail += (o.detail.empty() ? "" : ", ") + n;
  return o;
}

struct Runs {
  ExperimentResult full, vanilla, random, cap10, cap50;
};

Runs default_runs(std::size_t jobs) {
  const ExperimentConfig base;
  const auto stream = load_stream(base);
  auto run = [&](const std::function<void(ExperimentConfig&)>& edit) {
    auto c = base;
    edit(c);
    return run_experiment(c.model, c.train, stream, c.seeds, jobs);
  };
  Runs r;
  r.full = run([](auto&) {});
  r.vanilla = run([](auto& c) {
    c.model.enable_gonf = false;
    c.model.enable_ama = false;
  });
  r.random = run([](auto& c) { c.model.strategy = ama::Strategy::Random; });
  r.cap10 = run([](auto& c) { c.train.buffer_capacity = 10; });
  r.cap50 = run([](auto& c) { c.train.buffer_capacity = 50; });
  return r;
}

Outcome ablation(const Runs& r) {
  const double dap = r.full.ap->mean - r.vanilla.ap->mean;
  const double daf = r.full.af->mean - r.vanilla.af->mean;
  return {dap > 0.0 && daf < 0.0,
          fmt("AP full %.4f±%.4f vs vanilla %.4f±%.4f (margin %+.4f); AF full %.4f±%.4f vs vanilla %.4f±%.4f "
              "(margin %+.4f)",
              r.full.ap->mean, r.full.ap->std, r.vanilla.ap->mean, r.vanilla.ap->std, dap, r.full.af->mean,
              r.full.af->std, r.vanilla.af->mean, r.vanilla.af->std, daf)};
}

Outcome strategy(const Runs& r) {
  const double m = r.full.ap->mean - r.random.ap->mean;
  return {m >= 0.0, fmt("AP max_similarity %.4f±%.4f vs random %.4f±%.4f (margin %+.4f)", r.full.ap->mean,
                        r.full.ap->std, r.random.ap->mean, r.random.ap->std, m)};
}

Outcome memory_trend(const Runs& r) {
  const std::vector<std::pair<std::size_t, const Aggregate*>> pts{
      {10, &*r.cap10.ap}, {50, &*r.cap50.ap}, {200, &*r.full.ap}};
  Outcome o;
  for (const auto& [c, a] : pts) o.detail += fmt("%s%zu: %.4f±%.4f", o.detail.empty() ? "AP " : ", ", c, a->mean, a->std);
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto& lo = *pts[i].second;
    const auto& hi = *pts[i + 1].second;
    const double pooled = std::sqrt((lo.std * lo.std + hi.std * hi.std) / 2.0);
    if (hi.mean < lo.mean - pooled) {
      o.pass = false;
      o.detail += fmt("; violation %zu->%zu: drop %.4f exceeds pooled std %.4f", pts[i].first, pts[i + 1].first,
                      lo.mean - hi.mean, pooled);
    } else if (hi.mean < lo.mean) {
      o.detail += fmt("; dip %zu->%zu of %.4f within pooled std %.4f", pts[i].first, pts[i + 1].first,
                      lo.mean - hi.mean, pooled);
    }
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome determinism() {
  ExperimentConfig c;
  c.name = "determinism";
  c.seeds = {3};
  c.output.format = "csv";
  const auto root = fs::temp_directory_path() / ("macvqa_acceptance_" + std::to_string(::getpid()));
  std::vector<std::string> texts;
  for (const char* run : {"a", "b"}) {
    const auto paths = write_report(c, run_config(c), root / run, c.name);
    texts.push_back(slurp(*paths.csv));
  }
  fs::remove_all(root);
  return {!texts[0].empty() && texts[0] == texts[1],
          fmt("two runs of seed 3 on the default stream, %zu CSV bytes, identical: %s", texts[0].size(),
              texts[0] == texts[1] ? "yes" : "no")};
}

Outcome pool_safety() {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t ops = 0, over = 0, zero = 0, roundtrip_fail = 0, rejected = 0;
  for (std::size_t cap : {1u, 4u, 16u, 50u}) {
    ama::MemoryPool pool(cap, 0.8);
    for (int op = 0; op < 10000; ++op, ++ops) {
      auto h = oracle::random_vec(4, rng);
      // Occasional zero and near-cancelling inputs exercise the rejection path.
      if (op % 97 == 0) h.assign(4, 0.0);
      const Vector x(h);
      const Vector y(oracle::random_vec(4, rng));
      try {
        if (u(rng) < 0.75 || pool.size(ama::Modality::Visual) == 0) {
          ama::admit_or_update(pool, x, y, u(rng), u(rng) * 2.0 - 1.0);
        } else {
          ama::memory_update(pool, op % 5 == 0 ? Vector(pool.prototypes(ama::Modality::Visual)[0].value) : x,
                             u(rng) < 0.1 ? 0.0 : u(rng), ama::Modality::Visual,
                             rng() % pool.size(ama::Modality::Visual));
        }
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::ZeroVector) throw;
        ++rejected;
      }
      for (auto m : {ama::Modality::Visual, ama::Modality::Textual}) {
        if (pool.size(m) > cap) ++over;
        for (const auto& p : pool.prototypes(m))
          if (!(norm(p.value.span()) >= kMinNorm)) ++zero;
      }
    }
    const nlohmann::json j = pool;
    if (nlohmann::json::parse(j.dump()).get<ama::MemoryPool>() != pool) ++roundtrip_fail;
  }

  // Full training-state checkpoint after one task.
  ExperimentConfig c;
  c.stream.tasks = 2;
  c.stream.train_per_task = 40;
  const auto stream = load_stream(c);
  auto st = ModelState::init(c.model, c.train, 5, total_steps(stream, c.train));
  RehearsalBuffer buf(c.train.buffer_capacity);
  train_task(st, stream.tasks[0], buf, c.model, c.train);
  const auto text = save_checkpoint(st).dump();
  auto loaded = load_checkpoint(nlohmann::json::parse(text));
  const bool ckpt_ok = save_checkpoint(loaded).dump() == text && loaded.pool == st.pool;
  RehearsalBuffer buf2;
  buf2.restore(buf.capacity(), buf.seen(), buf.items());
  const bool resume_ok = train_task(st, stream.tasks[1], buf, c.model, c.train).losses ==
                         train_task(loaded, stream.tasks[1], buf2, c.model, c.train).losses;

  return {over == 0 && zero == 0 && roundtrip_fail == 0 && ckpt_ok && resume_ok,
          fmt("%zu ops (%zu zero-norm inputs rejected): %zu capacity overflows, %zu zero-norm prototypes, %zu pool "
              "round-trip failures; checkpoint exact: %s, resumed trajectory identical: %s",
              ops, rejected, over, zero, roundtrip_fail, ckpt_ok ? "yes" : "no", resume_ok ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::size_t jobs = std::max(1u, std::min(5u, std::thread::hardware_concurrency()));
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
    std::fflush(stdout);
  };

  report(1, "gradients", gradient_suite);
  report(2, "oracles", oracle_equivalence);
  report(3, "closed forms", closed_forms);

  const auto t0 = std::chrono::steady_clock::now();
  std::optional<Runs> runs;
  std::string run_error;
  try {
    runs = default_runs(jobs);
  } catch (const std::exception& e) {
    run_error = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto with_runs = [&](Outcome (*f)(const Runs&)) {
    return [&, f]() -> Outcome { return runs ? f(*runs) : Outcome{false, run_error}; };
  };
  report(4, "ablation ordering", [&] {
    auto o = with_runs(ablation)();
    o.detail += fmt(" [5 seeds, all default-stream runs took %.0fs]", secs);
    return o;
  });
  report(5, "strategy ordering", with_runs(strategy));
  report(6, "memory-size trend", with_runs(memory_trend));
  report(7, "determinism", determinism);
  report(8, "pool safety", pool_safety);
  return all ? 0 : 1;
}
