#pragma once

// Synthetic continual VQA-style task stream plus a newline-delimited JSON
// feature file format for externally extracted features.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "macvqa/decoder.hpp"
#include "macvqa/linalg.hpp"

namespace macvqa::datagen {

inline constexpr std::array<const char*, 10> kTaskNames = {
    "recognition", "location", "judge", "commonsense", "count", "action", "color", "type", "subcategory", "causal"};

inline std::string task_name(std::size_t id) { return kTaskNames[id % kTaskNames.size()]; }

using Pair = std::pair<std::uint32_t, std::uint32_t>;  // (visual cluster, query cluster)

struct Sample {
  Matrix regions;  // n×d
  Matrix query;    // L×d
  decoder::AnswerSequence answer;
  std::uint32_t task = 0;
  Pair pair{0, 0};

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct TaskSpec {
  std::uint32_t id = 0;
  std::string name;
  std::vector<Vector> visual_centers;
  std::vector<Vector> query_centers;
  std::vector<std::vector<decoder::Token>> answer_rule;  // [visual][query] -> token
  std::set<Pair> held_out;
  double region_noise = 0.0;
  std::vector<Sample> train;
  std::vector<Sample> test;   // seen compositions
  std::vector<Sample> novel;  // held-out compositions
};

struct Dims {
  std::size_t d = 32;
  std::size_t n = 8;
  std::size_t L = 6;
  std::size_t T = 1;
  std::size_t vocab = 9;

  friend bool operator==(const Dims&, const Dims&) = default;
};

struct StreamConfig {
  Dims dims;
  std::size_t tasks = 10;
  std::size_t visual_clusters = 4;
  std::size_t query_clusters = 4;
  std::size_t held_out = 1;
  std::size_t train_per_task = 200;
  std::size_t test_per_task = 50;
  std::size_t novel_per_task = 50;
  double region_noise = 0.1;
  double query_noise = 0.02;
  double center_scale = 1.0;  // std of center coordinates
  std::uint64_t seed = 7;
};

struct Stream {
  Dims dims;
  std::vector<TaskSpec> tasks;
};

inline void validate(const StreamConfig& c) {
  auto fail = [](const std::string& m) { throw Error(ErrorKind::ConfigInvalid, "stream: " + m); };
  if (c.dims.d == 0 || c.dims.n == 0 || c.dims.L == 0 || c.dims.T == 0) fail("dims must be >= 1");
  if (c.dims.vocab < 2) fail("vocab must be >= 2");
  if (c.tasks == 0) fail("tasks must be >= 1");
  if (c.visual_clusters == 0 || c.query_clusters == 0) fail("cluster counts must be >= 1");
  if (c.held_out >= c.visual_clusters * c.query_clusters) fail("held_out must leave at least one seen pair");
  if (c.held_out == 0 && c.novel_per_task > 0) fail("novel samples requested but no pair is held out");
  if (c.train_per_task == 0 || c.test_per_task == 0) fail("train/test sizes must be >= 1");
  if (c.region_noise < 0.0 || c.query_noise < 0.0 || c.center_scale <= 0.0) fail("noise levels must be >= 0");
}

namespace detail {

inline Vector gaussian_vector(std::size_t d, double sd, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, sd);
  Vector v(d);
  for (auto& x : v) x = g(rng);
  return v;
}

inline Matrix tiled(const Vector& center, std::size_t rows, double noise, std::mt19937_64& rng) {
  Matrix m(rows, center.size());
  std::normal_distribution<double> g(0.0, noise > 0.0 ? noise : 1.0);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < center.size(); ++j) m(i, j) = center[j] + (noise > 0.0 ? g(rng) : 0.0);
  return m;
}

}  // namespace detail

/// Builds one task with its own sub-seed `seed + id`.
inline TaskSpec generate_task(const StreamConfig& c, std::uint32_t id) {
  std::mt19937_64 rng(c.seed + id);
  TaskSpec t;
  t.id = id;
  t.name = task_name(id);
  t.region_noise = c.region_noise;
  const auto& dm = c.dims;
  for (std::size_t i = 0; i < c.visual_clusters; ++i)
    t.visual_centers.push_back(detail::gaussian_vector(dm.d, c.center_scale, rng));
  for (std::size_t i = 0; i < c.query_clusters; ++i)
    t.query_centers.push_back(detail::gaussian_vector(dm.d, c.center_scale, rng));

  // Additive score tables keep the rule linearly separable in the centers:
  // answer(v, q) = argmax_a F[a][v] + G[a][q] over the non-pad tokens.
  std::normal_distribution<double> g(0.0, 1.0);
  const std::size_t answers = dm.vocab - 1;
  std::vector<std::vector<double>> f(answers, std::vector<double>(c.visual_clusters));
  std::vector<std::vector<double>> h(answers, std::vector<double>(c.query_clusters));
  for (auto& row : f)
    for (auto& x : row) x = g(rng);
  for (auto& row : h)
    for (auto& x : row) x = g(rng);
  t.answer_rule.assign(c.visual_clusters, std::vector<decoder::Token>(c.query_clusters));
  for (std::size_t v = 0; v < c.visual_clusters; ++v)
    for (std::size_t q = 0; q < c.query_clusters; ++q) {
      std::size_t best = 0;
      for (std::size_t a = 1; a < answers; ++a)
        if (f[a][v] + h[a][q] > f[best][v] + h[best][q]) best = a;
      t.answer_rule[v][q] = static_cast<decoder::Token>(best + 1);
    }

  std::vector<Pair> all;
  for (std::uint32_t v = 0; v < c.visual_clusters; ++v)
    for (std::uint32_t q = 0; q < c.query_clusters; ++q) all.emplace_back(v, q);
  std::shuffle(all.begin(), all.end(), rng);
  t.held_out.insert(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(c.held_out));
  std::vector<Pair> seen(all.begin() + static_cast<std::ptrdiff_t>(c.held_out), all.end());
  std::sort(seen.begin(), seen.end());
  std::vector<Pair> novel(t.held_out.begin(), t.held_out.end());

  auto make = [&](const Pair& p) {
    Sample s;
    s.regions = detail::tiled(t.visual_centers[p.first], dm.n, c.region_noise, rng);
    s.query = detail::tiled(t.query_centers[p.second], dm.L, c.query_noise, rng);
    s.answer.tokens.assign(dm.T, decoder::kPad);
    s.answer.tokens[0] = t.answer_rule[p.first][p.second];
    s.task = id;
    s.pair = p;
    return s;
  };
  auto draw = [&](const std::vector<Pair>& pool, std::size_t count, std::vector<Sample>& out) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < count; ++i) out.push_back(make(pool[pick(rng)]));
  };
  draw(seen, c.train_per_task, t.train);
  draw(seen, c.test_per_task, t.test);
  if (!novel.empty()) draw(novel, c.novel_per_task, t.novel);
  return t;
}

inline Stream generate_stream(const StreamConfig& c) {
  validate(c);
  Stream s{c.dims, {}};
  for (std::uint32_t i = 0; i < c.tasks; ++i) s.tasks.push_back(generate_task(c, i));
  return s;
}

// ---------------------------------------------------------------------------
// Feature file: one header line {version, d, n, L, T, vocab, records} followed
// by one record per line {task, split, regions, query, answer, pair}. Numbers
// are written with 17 significant digits.

inline constexpr int kFeatureFormatVersion = 1;

namespace detail {

inline void write_number(std::ostream& os, double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  os << buf;
}

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << '[';
  for (std::size_t i = 0; i < m.rows(); ++i) {
    if (i) os << ',';
    os << '[';
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      write_number(os, m(i, j));
    }
    os << ']';
  }
  os << ']';
}

inline Matrix read_matrix(const nlohmann::json& j, std::size_t rows, std::size_t cols, const std::string& what) {
  if (!j.is_array() || j.size() != rows)
    throw Error(ErrorKind::ShapeMismatch, what + ": expected " + std::to_string(rows) + " rows");
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto& r = j[i];
    if (!r.is_array() || r.size() != cols)
      throw Error(ErrorKind::ShapeMismatch, what + ": row " + std::to_string(i) + " is not " + std::to_string(cols) + " wide");
    for (std::size_t k = 0; k < cols; ++k) m(i, k) = r[k].get<double>();
  }
  return m;
}

}  // namespace detail

inline void write_features(std::ostream& os, const Stream& s) {
  std::size_t records = 0;
  for (const auto& t : s.tasks) records += t.train.size() + t.test.size() + t.novel.size();
  os << R"({"version":)" << kFeatureFormatVersion << R"(,"d":)" << s.dims.d << R"(,"n":)" << s.dims.n
     << R"(,"L":)" << s.dims.L << R"(,"T":)" << s.dims.T << R"(,"vocab":)" << s.dims.vocab << R"(,"records":)"
     << records << "}\n";
  auto emit = [&](const Sample& smp, const char* split) {
    os << R"({"task":)" << smp.task << R"(,"split":")" << split << R"(","regions":)";
    detail::write_matrix(os, smp.regions);
    os << R"(,"query":)";
    detail::write_matrix(os, smp.query);
    os << R"(,"answer":[)";
    for (std::size_t i = 0; i < smp.answer.tokens.size(); ++i) os << (i ? "," : "") << smp.answer.tokens[i];
    os << R"(],"pair":[)" << smp.pair.first << ',' << smp.pair.second << "]}\n";
  };
  for (const auto& t : s.tasks) {
    for (const auto& x : t.train) emit(x, "train");
    for (const auto& x : t.test) emit(x, "test");
    for (const auto& x : t.novel) emit(x, "novel");
  }
}

inline Stream read_features(std::istream& is) {
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& text) {
    try {
      return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": " + e.what());
    }
  };
  if (!std::getline(is, line)) throw Error(ErrorKind::ParseError, "line 1: missing header record");
  ++line_no;
  Stream s;
  std::size_t expected = 0;
  bool has_count = false;
  try {
    auto h = parse(line);
    if (h.at("version").get<int>() != kFeatureFormatVersion)
      throw Error(ErrorKind::ParseError, "line 1: unsupported feature format version");
    s.dims = {h.at("d").get<std::size_t>(), h.at("n").get<std::size_t>(), h.at("L").get<std::size_t>(),
              h.at("T").get<std::size_t>(), h.at("vocab").get<std::size_t>()};
    if (h.contains("records")) {
      expected = h.at("records").get<std::size_t>();
      has_count = true;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::ParseError, "line 1: bad header: " + std::string(e.what()));
  }

  std::size_t count = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto r = parse(line);
    const std::string where = "line " + std::to_string(line_no);
    try {
      Sample smp;
      smp.task = r.at("task").get<std::uint32_t>();
      smp.regions = detail::read_matrix(r.at("regions"), s.dims.n, s.dims.d, where + " regions");
      smp.query = detail::read_matrix(r.at("query"), s.dims.L, s.dims.d, where + " query");
      smp.answer.tokens = r.at("answer").get<std::vector<decoder::Token>>();
      if (smp.answer.tokens.size() != s.dims.T)
        throw Error(ErrorKind::ShapeMismatch, where + ": answer length differs from T");
      for (auto tok : smp.answer.tokens)
        if (tok >= s.dims.vocab) throw Error(ErrorKind::ShapeMismatch, where + ": answer token outside vocabulary");
      auto pr = r.at("pair").get<std::vector<std::uint32_t>>();
      if (pr.size() != 2) throw Error(ErrorKind::ShapeMismatch, where + ": pair must have two entries");
      smp.pair = {pr[0], pr[1]};
      const auto split = r.at("split").get<std::string>();

      auto it = std::find_if(s.tasks.begin(), s.tasks.end(), [&](const TaskSpec& t) { return t.id == smp.task; });
      if (it == s.tasks.end()) {
        TaskSpec t;
        t.id = smp.task;
        t.name = task_name(smp.task);
        s.tasks.push_back(std::move(t));
        it = s.tasks.end() - 1;
      }
      if (split == "train") {
        it->train.push_back(std::move(smp));
      } else if (split == "test") {
        it->test.push_back(std::move(smp));
      } else if (split == "novel") {
        it->held_out.insert(smp.pair);
        it->novel.push_back(std::move(smp));
      } else {
        throw Error(ErrorKind::ParseError, where + ": unknown split '" + split + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::ParseError, where + ": " + e.what());
    }
    ++count;
  }
  if (has_count && count != expected)
    throw Error(ErrorKind::ParseError, "line " + std::to_string(line_no + 1) + ": expected " +
                                           std::to_string(expected) + " records, found " + std::to_string(count) +
                                           " (truncated file?)");
  std::sort(s.tasks.begin(), s.tasks.end(), [](const TaskSpec& a, const TaskSpec& b) { return a.id < b.id; });
  return s;
}

inline void export_features(const std::string& path, const Stream& s) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::ParseError, "cannot open '" + path + "' for writing");
  write_features(os, s);
}

inline Stream ingest_features(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::ParseError, "cannot open '" + path + "'");
  return read_features(is);
}

}  // namespace macvqa::datagen
