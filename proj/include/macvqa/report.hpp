#pragma once

// Experiment reports: nested JSON with full accuracy matrices, and a flat CSV
// with one row per seed and test paradigm. Files are written atomically.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "macvqa/config.hpp"
#include "macvqa/harness.hpp"

namespace macvqa {

namespace report_detail {

inline nlohmann::json opt(const std::optional<double>& x) { return x ? nlohmann::json(*x) : nlohmann::json(nullptr); }

inline nlohmann::json matrix_json(const AccuracyMatrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : m.rows()) {
    nlohmann::json r = nlohmann::json::array();
    for (const auto& c : row) r.push_back(opt(c));
    rows.push_back(r);
  }
  return rows;
}

inline std::string fixed(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", x);
  return buf;
}

inline std::string fixed(const std::optional<double>& x) { return x ? fixed(*x) : std::string{}; }

}  // namespace report_detail

inline nlohmann::json report_json(const ExperimentConfig& cfg, const ExperimentResult& r) {
  using report_detail::opt;
  nlohmann::json per_seed = nlohmann::json::array();
  for (const auto& s : r.per_seed) {
    per_seed.push_back({{"seed", s.seed},
                        {"accuracy_matrix_standard", report_detail::matrix_json(s.standard)},
                        {"accuracy_matrix_novel", s.has_novel ? report_detail::matrix_json(s.novel) : nullptr},
                        {"ap", s.ap},
                        {"af", opt(s.af)},
                        {"ap_novel", opt(s.ap_novel)},
                        {"af_novel", opt(s.af_novel)}});
  }
  auto agg = [](const std::optional<Aggregate>& a, const char* field) -> nlohmann::json {
    if (!a) return nullptr;
    return std::string(field) == "mean" ? a->mean : a->std;
  };
  return {{"config", to_json(cfg)},
          {"config_hash", config_hash(cfg)},
          {"per_seed", per_seed},
          {"aggregate",
           {{"ap_mean", agg(r.ap, "mean")},
            {"ap_std", agg(r.ap, "std")},
            {"af_mean", agg(r.af, "mean")},
            {"af_std", agg(r.af, "std")},
            {"ap_novel_mean", agg(r.ap_novel, "mean")},
            {"ap_novel_std", agg(r.ap_novel, "std")},
            {"af_novel_mean", agg(r.af_novel, "mean")},
            {"af_novel_std", agg(r.af_novel, "std")}}}};
}

inline std::string csv_header() {
  std::string h = "config_hash,seed,paradigm,task,ap,af";
  for (const char* name : datagen::kTaskNames) h += std::string(",") + name;
  return h + "\n";
}

/// Rows only (no header). `task` is the number of tasks trained; per-task
/// columns hold the final-row accuracies and stay empty past the stream length.
inline std::string csv_rows(const ExperimentConfig& cfg, const ExperimentResult& r) {
  using report_detail::fixed;
  const std::string hash = config_hash(cfg);
  std::ostringstream os;
  auto emit = [&](const SeedResult& s, const char* paradigm, const AccuracyMatrix& m, double ap,
                  const std::optional<double>& af) {
    const std::size_t last = m.tasks() - 1;
    os << hash << ',' << s.seed << ',' << paradigm << ',' << m.tasks() << ',' << fixed(ap) << ',' << fixed(af);
    for (std::size_t j = 0; j < datagen::kTaskNames.size(); ++j) {
      os << ',';
      if (j < m.tasks()) os << fixed(m.at(last, j));
    }
    os << '\n';
  };
  for (const auto& s : r.per_seed) {
    emit(s, "standard", s.standard, s.ap, s.af);
    if (s.has_novel) emit(s, "novel", s.novel, *s.ap_novel, s.af_novel);
  }
  return os.str();
}

inline std::string report_csv(const ExperimentConfig& cfg, const ExperimentResult& r) {
  return csv_header() + csv_rows(cfg, r);
}

/// Writes `text` to a sibling temp file and renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::ParseError, "cannot write " + tmp.string());
    os << text;
    os.flush();
    if (!os) throw Error(ErrorKind::ParseError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

struct ReportPaths {
  std::optional<std::filesystem::path> json, csv;
};

/// Writes <dir>/<stem>.json and/or <dir>/<stem>.csv per cfg.output.format.
inline ReportPaths write_report(const ExperimentConfig& cfg, const ExperimentResult& r,
                                const std::filesystem::path& dir, const std::string& stem) {
  ReportPaths out;
  const auto& fmt = cfg.output.format;
  if (fmt == "json" || fmt == "both") {
    out.json = dir / (stem + ".json");
    write_atomic(*out.json, report_json(cfg, r).dump(2) + "\n");
  }
  if (fmt == "csv" || fmt == "both") {
    out.csv = dir / (stem + ".csv");
    write_atomic(*out.csv, report_csv(cfg, r));
  }
  return out;
}

inline ExperimentResult run_config(const ExperimentConfig& cfg, std::size_t jobs = 1) {
  const auto stream = load_stream(cfg);
  return run_experiment(cfg.model, cfg.train, stream, cfg.seeds, jobs);
}

// ---------------------------------------------------------------------------
// Sweeps.

enum class SweepAxis { MemorySize, Strategy, AlphaBeta };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "memory_size") return SweepAxis::MemorySize;
  if (s == "strategy") return SweepAxis::Strategy;
  if (s == "alpha_beta") return SweepAxis::AlphaBeta;
  throw Error(ErrorKind::ConfigInvalid, "axis: unknown sweep axis '" + s + "'");
}

struct SweepPoint {
  std::string label;  // file stem and index value
  ExperimentConfig config;
};

/// Buffer capacity for a nominal memory size under the desk-scale factor.
inline std::size_t scaled_capacity(std::size_t size, double scale) {
  const auto c = static_cast<std::size_t>(std::llround(static_cast<double>(size) * scale));
  return c < 1 ? 1 : c;
}

inline std::vector<SweepPoint> sweep_points(const ExperimentConfig& base, SweepAxis axis) {
  std::vector<SweepPoint> pts;
  switch (axis) {
    case SweepAxis::MemorySize:
      if (base.sweep.memory_sizes.empty()) throw Error(ErrorKind::ConfigInvalid, "sweep.memory_sizes: empty");
      for (std::size_t m : base.sweep.memory_sizes) {
        SweepPoint p{"memory_" + std::to_string(m), base};
        p.config.train.buffer_capacity = scaled_capacity(m, base.sweep.memory_scale);
        pts.push_back(std::move(p));
      }
      break;
    case SweepAxis::Strategy:
      for (auto s : {ama::Strategy::Random, ama::Strategy::MaxSimilarity}) {
        SweepPoint p{"strategy_" + ama::to_string(s), base};
        p.config.model.strategy = s;
        pts.push_back(std::move(p));
      }
      break;
    case SweepAxis::AlphaBeta:
      if (base.sweep.alpha_beta.empty()) throw Error(ErrorKind::ConfigInvalid, "sweep.alpha_beta: empty");
      for (double a : base.sweep.alpha_beta)
        for (double b : base.sweep.alpha_beta) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "alpha_%g_beta_%g", a, b);
          SweepPoint p{buf, base};
          p.config.model.gate_override = std::pair{a, b};
          pts.push_back(std::move(p));
        }
      break;
  }
  return pts;
}

struct SweepOutput {
  std::vector<std::filesystem::path> reports;
  std::filesystem::path merged_csv;
  std::filesystem::path index_csv;
};

/// One report per point under <dir>, plus merged.csv (all rows, one header)
/// and sweep_index.csv mapping each point to its config hash.
inline SweepOutput run_sweep(const ExperimentConfig& base, SweepAxis axis, const std::filesystem::path& dir,
                             std::size_t jobs = 1) {
  const auto stream = load_stream(base);
  SweepOutput out;
  std::string merged = csv_header();
  std::string index = "point,config_hash\n";
  for (const auto& p : sweep_points(base, axis)) {
    const auto r = run_experiment(p.config.model, p.config.train, stream, p.config.seeds, jobs);
    const auto paths = write_report(p.config, r, dir, p.label);
    if (paths.json) out.reports.push_back(*paths.json);
    if (paths.csv) out.reports.push_back(*paths.csv);
    merged += csv_rows(p.config, r);
    index += p.label + "," + config_hash(p.config) + "\n";
  }
  out.merged_csv = dir / "merged.csv";
  out.index_csv = dir / "sweep_index.csv";
  write_atomic(out.merged_csv, merged);
  write_atomic(out.index_csv, index);
  return out;
}

}  // namespace macvqa
