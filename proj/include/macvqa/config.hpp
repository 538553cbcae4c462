#pragma once

// Experiment configuration: one versioned JSON document holding every
// dimension, hyperparameter, stream setting, seed list and output location.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "macvqa/datagen.hpp"
#include "macvqa/harness.hpp"
#include "macvqa/model.hpp"

namespace macvqa {

inline constexpr int kConfigVersion = 1;

struct OutputConfig {
  std::string out_dir = "out";
  std::string format = "both";  // json | csv | both
};

struct SweepConfig {
  std::vector<std::size_t> memory_sizes{50, 100, 500, 1000, 5000};
  double memory_scale = 0.04;  // desk-scale factor applied to memory_sizes
  std::vector<double> alpha_beta{0.2, 0.4, 0.6, 0.8, 1.0};
};

struct ExperimentConfig {
  std::string name = "default";
  ModelConfig model;
  TrainConfig train;
  datagen::StreamConfig stream;
  std::string feature_file;  // when set, samples are ingested instead of generated
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  OutputConfig output;
  SweepConfig sweep;

};

namespace config_detail {

inline std::string entropy_name(gonf::EntropySign s) { return s == gonf::EntropySign::AsPrinted ? "as_printed" : "smoothing"; }

[[noreturn]] inline void invalid(const std::string& field, const std::string& why) {
  throw Error(ErrorKind::ConfigInvalid, field + ": " + why);
}

/// Reads j[key] into out when present; rejects unknown keys in `j`.
class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) invalid(path_.empty() ? "<root>" : path_, "expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      invalid(field(key), "has the wrong type");
    }
  }

  Reader child(const char* key) {
    seen_.insert(key);
    static const nlohmann::json empty = nlohmann::json::object();
    return Reader(j_.contains(key) ? j_.at(key) : empty, field(key));
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.contains(k)) invalid(path_.empty() ? k : path_ + "." + k, "unknown field");
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace config_detail

inline nlohmann::json to_json(const ExperimentConfig& c) {
  using nlohmann::json;
  const auto& m = c.model;
  const auto& s = c.stream;
  json gate = nullptr;
  if (m.gate_override) gate = {{"alpha", m.gate_override->first}, {"beta", m.gate_override->second}};
  return {
      {"version", kConfigVersion},
      {"name", c.name},
      {"dims", {{"d", m.dims.d}, {"n", m.dims.n}, {"L", m.dims.L}, {"T", m.dims.T}, {"vocab", m.dims.vocab}}},
      {"model", {{"d_e", m.d_e}, {"d_att", m.d_att}, {"dae_hidden", m.dae_hidden}, {"dae_noise", m.dae_noise}}},
      {"gonf", {{"enabled", m.enable_gonf}, {"theta1", m.theta1}, {"entropy_sign", config_detail::entropy_name(m.entropy_sign)}}},
      {"ama",
       {{"enabled", m.enable_ama},
        {"strategy", ama::to_string(m.strategy)},
        {"k", m.k},
        {"lambda", m.lambda},
        {"pool_capacity", m.pool_capacity},
        {"sim_threshold", m.sim_threshold},
        {"theta2", m.theta2},
        {"theta3", m.theta3},
        {"gate_override", gate}}},
      {"loss", {{"phi", m.phi}}},
      {"train",
       {{"lr", c.train.lr},
        {"epochs", c.train.epochs},
        {"clip_norm", c.train.clip_norm},
        {"warmup_ratio", c.train.warmup_ratio},
        {"buffer_capacity", c.train.buffer_capacity}}},
      {"stream",
       {{"tasks", s.tasks},
        {"visual_clusters", s.visual_clusters},
        {"query_clusters", s.query_clusters},
        {"held_out", s.held_out},
        {"train_per_task", s.train_per_task},
        {"test_per_task", s.test_per_task},
        {"novel_per_task", s.novel_per_task},
        {"region_noise", s.region_noise},
        {"query_noise", s.query_noise},
        {"center_scale", s.center_scale},
        {"seed", s.seed},
        {"feature_file", c.feature_file}}},
      {"seeds", c.seeds},
      {"output", {{"out_dir", c.output.out_dir}, {"format", c.output.format}}},
      {"sweep",
       {{"memory_sizes", c.sweep.memory_sizes},
        {"memory_scale", c.sweep.memory_scale},
        {"alpha_beta", c.sweep.alpha_beta}}},
  };
}

/// Field-level checks; throws ConfigInvalid naming the first bad field.
/// Returns non-fatal warnings.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  using config_detail::invalid;
  const auto& m = c.model;
  auto positive = [](std::size_t v, const char* f) {
    if (v < 1) invalid(f, "must be >= 1");
  };
  positive(m.dims.d, "dims.d");
  positive(m.dims.n, "dims.n");
  positive(m.dims.L, "dims.L");
  positive(m.dims.T, "dims.T");
  if (m.dims.vocab < 2) invalid("dims.vocab", "must be >= 2");
  positive(m.d_e, "model.d_e");
  positive(m.d_att, "model.d_att");
  if (m.dae_noise < 0.0) invalid("model.dae_noise", "must be >= 0");
  positive(m.k, "ama.k");
  positive(m.pool_capacity, "ama.pool_capacity");
  if (!(m.lambda >= 0.0 && m.lambda <= 1.0)) invalid("ama.lambda", "must lie in [0,1]");
  if (!(m.sim_threshold >= -1.0 && m.sim_threshold <= 1.0)) invalid("ama.sim_threshold", "must lie in [-1,1]");
  if (m.theta2 < 0.0) invalid("ama.theta2", "must be >= 0");
  if (m.theta3 < 0.0) invalid("ama.theta3", "must be >= 0");
  if (m.theta1 < 0.0) invalid("gonf.theta1", "must be >= 0");
  try {
    decoder::require_loss_simplex(m.phi);
  } catch (const Error& e) {
    invalid("loss.phi", std::string("simplex violation (") + e.what() + ")");
  }
  if (!(c.train.lr >= 0.0)) invalid("train.lr", "must be >= 0");
  if (!(c.train.warmup_ratio >= 0.0 && c.train.warmup_ratio <= 1.0)) invalid("train.warmup_ratio", "must lie in [0,1]");
  if (c.seeds.empty()) invalid("seeds", "must list at least one seed");
  if (c.output.format != "json" && c.output.format != "csv" && c.output.format != "both")
    invalid("output.format", "must be json, csv or both");
  if (c.sweep.memory_scale <= 0.0) invalid("sweep.memory_scale", "must be > 0");
  if (c.feature_file.empty()) {
    try {
      datagen::validate(c.stream);
    } catch (const Error& e) {
      invalid("stream", e.what());
    }
  }
  std::vector<std::string> warnings;
  if (m.theta1 < 0.1 || m.theta1 > 0.5) warnings.push_back("gonf.theta1 outside the usual range [0.1, 0.5]");
  if (m.theta2 < 0.01 || m.theta2 > 1.0) warnings.push_back("ama.theta2 outside the usual range [0.01, 1.0]");
  if (m.theta3 < 0.01 || m.theta3 > 1.0) warnings.push_back("ama.theta3 outside the usual range [0.01, 1.0]");
  return warnings;
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  using config_detail::invalid;
  using config_detail::Reader;
  ExperimentConfig c;
  Reader root(j, "");
  int version = kConfigVersion;
  root.get("version", version);
  if (version != kConfigVersion) invalid("version", "unsupported config version " + std::to_string(version));
  root.get("name", c.name);
  auto& m = c.model;
  {
    Reader r = root.child("dims");
    r.get("d", m.dims.d);
    r.get("n", m.dims.n);
    r.get("L", m.dims.L);
    r.get("T", m.dims.T);
    r.get("vocab", m.dims.vocab);
    r.finish();
  }
  {
    Reader r = root.child("model");
    r.get("d_e", m.d_e);
    r.get("d_att", m.d_att);
    r.get("dae_hidden", m.dae_hidden);
    r.get("dae_noise", m.dae_noise);
    r.finish();
  }
  {
    Reader r = root.child("gonf");
    r.get("enabled", m.enable_gonf);
    r.get("theta1", m.theta1);
    std::string sign = config_detail::entropy_name(m.entropy_sign);
    r.get("entropy_sign", sign);
    if (sign == "as_printed") {
      m.entropy_sign = gonf::EntropySign::AsPrinted;
    } else if (sign == "smoothing") {
      m.entropy_sign = gonf::EntropySign::Smoothing;
    } else {
      invalid("gonf.entropy_sign", "must be as_printed or smoothing");
    }
    r.finish();
  }
  {
    Reader r = root.child("ama");
    r.get("enabled", m.enable_ama);
    std::string strategy = ama::to_string(m.strategy);
    r.get("strategy", strategy);
    try {
      m.strategy = ama::strategy_from_string(strategy);
    } catch (const Error&) {
      invalid("ama.strategy", "must be max_similarity or random");
    }
    r.get("k", m.k);
    r.get("lambda", m.lambda);
    r.get("pool_capacity", m.pool_capacity);
    r.get("sim_threshold", m.sim_threshold);
    r.get("theta2", m.theta2);
    r.get("theta3", m.theta3);
    if (r.has("gate_override")) {
      const auto& g = r.raw("gate_override");
      if (!g.is_null()) {
        Reader gr(g, "ama.gate_override");
        double a = 0.5, b = 0.5;
        gr.get("alpha", a);
        gr.get("beta", b);
        gr.finish();
        m.gate_override = std::pair{a, b};
      }
    }
    r.finish();
  }
  {
    Reader r = root.child("loss");
    std::vector<double> phi(m.phi.begin(), m.phi.end());
    r.get("phi", phi);
    if (phi.size() != 3) invalid("loss.phi", "must have exactly three entries");
    m.phi = {phi[0], phi[1], phi[2]};
    r.finish();
  }
  {
    Reader r = root.child("train");
    r.get("lr", c.train.lr);
    r.get("epochs", c.train.epochs);
    r.get("clip_norm", c.train.clip_norm);
    r.get("warmup_ratio", c.train.warmup_ratio);
    r.get("buffer_capacity", c.train.buffer_capacity);
    r.finish();
  }
  {
    auto& s = c.stream;
    Reader r = root.child("stream");
    r.get("tasks", s.tasks);
    r.get("visual_clusters", s.visual_clusters);
    r.get("query_clusters", s.query_clusters);
    r.get("held_out", s.held_out);
    r.get("train_per_task", s.train_per_task);
    r.get("test_per_task", s.test_per_task);
    r.get("novel_per_task", s.novel_per_task);
    r.get("region_noise", s.region_noise);
    r.get("query_noise", s.query_noise);
    r.get("center_scale", s.center_scale);
    r.get("seed", s.seed);
    r.get("feature_file", c.feature_file);
    r.finish();
  }
  root.get("seeds", c.seeds);
  {
    Reader r = root.child("output");
    r.get("out_dir", c.output.out_dir);
    r.get("format", c.output.format);
    r.finish();
  }
  {
    Reader r = root.child("sweep");
    r.get("memory_sizes", c.sweep.memory_sizes);
    r.get("memory_scale", c.sweep.memory_scale);
    r.get("alpha_beta", c.sweep.alpha_beta);
    r.finish();
  }
  root.finish();
  c.stream.dims = m.dims;
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) config_detail::invalid("--config", "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::ConfigInvalid, "<file>: " + std::string(e.what()));
  }
  return config_from_json(j);
}

/// MACVQA_OUT_DIR and MACVQA_SEED override the output directory and seed list.
inline void apply_env_overrides(ExperimentConfig& c) {
  if (const char* dir = std::getenv("MACVQA_OUT_DIR"); dir && *dir) c.output.out_dir = dir;
  if (const char* seed = std::getenv("MACVQA_SEED"); seed && *seed) {
    char* end = nullptr;
    const auto v = std::strtoull(seed, &end, 10);
    if (end == seed || *end != '\0') config_detail::invalid("MACVQA_SEED", "not an unsigned integer");
    c.seeds = {v};
  }
}

/// FNV-1a of the canonical config dump, excluding the output section.
inline std::string config_hash(const ExperimentConfig& c) {
  auto j = to_json(c);
  j.erase("output");
  const std::string text = j.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// The generated stream, or the ingested one when feature_file is set.
inline datagen::Stream load_stream(const ExperimentConfig& c) {
  if (c.feature_file.empty()) {
    auto sc = c.stream;
    sc.dims = c.model.dims;
    return datagen::generate_stream(sc);
  }
  auto s = datagen::ingest_features(c.feature_file);
  if (!(s.dims == c.model.dims))
    throw Error(ErrorKind::ShapeMismatch, "feature file dims differ from config dims");
  return s;
}

}  // namespace macvqa
