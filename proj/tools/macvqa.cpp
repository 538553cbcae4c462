// macvqa: run, sweep, gradcheck, gen-data, ingest.
//
// Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
// Failures print exactly one line "error: <Kind>: <message>" on stderr.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "macvqa/config.hpp"
#include "macvqa/gradcheck.hpp"
#include "macvqa/report.hpp"

namespace fs = std::filesystem;
using namespace macvqa;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out_dir;
  std::string format;
};

void add_common(CLI::App* app, Common& c, bool config_required) {
  auto* opt = app->add_option("--config", c.config, "experiment config (JSON)");
  if (config_required) opt->required();
  app->add_option("--seed", c.seed, "run a single seed");
  app->add_option("--jobs", c.jobs, "seeds trained concurrently")->check(CLI::PositiveNumber);
  app->add_option("--out-dir", c.out_dir, "output directory");
  app->add_option("--format", c.format, "report format")->check(CLI::IsMember({"json", "csv", "both"}));
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config.empty() ? ExperimentConfig{} : load_config(c.config);
  apply_env_overrides(cfg);
  if (c.seed) cfg.seeds = {*c.seed};
  if (!c.out_dir.empty()) cfg.output.out_dir = c.out_dir;
  if (!c.format.empty()) cfg.output.format = c.format;
  for (const auto& w : validate(cfg)) std::cerr << "warning: " << w << "\n";
  return cfg;
}

void print_summary(const std::string& label, const ExperimentResult& r) {
  auto show = [](const std::optional<Aggregate>& a) {
    if (!a) return std::string("n/a");
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f +- %.4f", a->mean, a->std);
    return std::string(buf);
  };
  std::cout << label << "  AP " << show(r.ap) << "  AF " << show(r.af) << "  AP(novel) " << show(r.ap_novel)
            << "  AF(novel) " << show(r.af_novel) << "\n";
}

int cmd_run(const Common& c) {
  const auto cfg = resolve(c);
  const auto r = run_config(cfg, c.jobs);
  const auto paths = write_report(cfg, r, cfg.output.out_dir, cfg.name);
  print_summary(cfg.name, r);
  if (paths.json) std::cout << "wrote " << paths.json->string() << "\n";
  if (paths.csv) std::cout << "wrote " << paths.csv->string() << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::string& axis_name) {
  const auto axis = sweep_axis_from_string(axis_name);
  const auto cfg = resolve(c);
  const fs::path dir = fs::path(cfg.output.out_dir) / (cfg.name + "_sweep_" + axis_name);
  const auto out = run_sweep(cfg, axis, dir, c.jobs);
  std::cout << "wrote " << out.reports.size() << " report files, " << out.merged_csv.string() << " and "
            << out.index_csv.string() << "\n";
  return 0;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.dims = {8, 4, 3, 2, 5};
  m.d_e = 8;
  m.d_att = 8;
  m.k = 2;
  m.pool_capacity = 8;
  return m;
}

int cmd_gradcheck(const Common& c, std::size_t instances, const std::string& corrupt) {
  ModelConfig mc = tiny_model();
  std::uint64_t seed = 1;
  if (!c.config.empty()) {
    const auto cfg = resolve(c);
    mc = cfg.model;
    seed = cfg.seeds.front();
  }
  if (c.seed) seed = *c.seed;
  if (mc.dims.d > 16) throw Error(ErrorKind::ConfigInvalid, "dims.d: gradcheck requires d <= 16");
  GradcheckOptions opt;
  if (!corrupt.empty()) opt.corrupt_group = corrupt;

  GradcheckReport all;
  for (std::size_t i = 0; i < instances; ++i) all.append(gradcheck_model(mc, seed + i, opt));

  // Collapse instances into one row per (loss, group).
  std::map<std::pair<std::string, std::string>, GradcheckRow> merged;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : all.rows) {
    auto key = std::pair{r.loss, r.group};
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged.emplace(key, r);
      order.push_back(key);
      continue;
    }
    auto& m = it->second;
    m.entries += r.entries;
    m.max_abs = std::max(m.max_abs, r.max_abs);
    m.max_rel = std::max(m.max_rel, r.max_rel);
    m.pass = m.pass && r.pass;
  }
  std::printf("%-8s %-16s %8s %12s %12s  %s\n", "loss", "group", "entries", "max_abs", "max_rel", "status");
  for (const auto& key : order) {
    const auto& r = merged.at(key);
    std::printf("%-8s %-16s %8zu %12.3e %12.3e  %s\n", r.loss.c_str(), r.group.c_str(), r.entries, r.max_abs,
                r.max_rel, r.pass ? "PASS" : "FAIL");
  }
  if (all.pass()) {
    std::printf("gradcheck passed (%zu instances)\n", instances);
    return 0;
  }
  std::string failing;
  for (const auto& key : order)
    if (!merged.at(key).pass) failing += (failing.empty() ? "" : ",") + key.first + "/" + key.second;
  std::cerr << "error: GradientMismatch: failing groups " << failing << "\n";
  return 1;
}

int cmd_gen_data(const Common& c, const std::string& output) {
  const auto cfg = resolve(c);
  auto sc = cfg.stream;
  sc.dims = cfg.model.dims;
  const auto stream = datagen::generate_stream(sc);
  const fs::path path = output.empty() ? fs::path(cfg.output.out_dir) / (cfg.name + ".features.ndjson") : fs::path(output);
  std::ostringstream os;
  datagen::write_features(os, stream);
  write_atomic(path, os.str());
  std::cout << "wrote " << stream.tasks.size() << " tasks to " << path.string() << "\n";
  return 0;
}

int cmd_ingest(const std::string& input) {
  const auto s = datagen::ingest_features(input);
  std::size_t train = 0, test = 0, novel = 0;
  for (const auto& t : s.tasks) {
    train += t.train.size();
    test += t.test.size();
    novel += t.novel.size();
  }
  std::cout << "ok: " << s.tasks.size() << " tasks, d=" << s.dims.d << " n=" << s.dims.n << " L=" << s.dims.L
            << " T=" << s.dims.T << " vocab=" << s.dims.vocab << ", " << train << " train / " << test << " test / "
            << novel << " novel samples\n";
  return 0;
}

std::string one_line(std::string s) {
  for (auto& ch : s)
    if (ch == '\n' || ch == '\r') ch = ' ';
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual multimodal learning lab"};
  app.require_subcommand(1);

  Common run_opts, sweep_opts, grad_opts, gen_opts;
  auto* run = app.add_subcommand("run", "train and evaluate every seed, write reports");
  add_common(run, run_opts, true);

  std::string axis;
  auto* sweep = app.add_subcommand("sweep", "one report per sweep point plus a merged CSV");
  add_common(sweep, sweep_opts, true);
  sweep->add_option("--axis", axis, "memory_size | strategy | alpha_beta")
      ->required()
      ->check(CLI::IsMember({"memory_size", "strategy", "alpha_beta"}));

  std::size_t instances = 20;
  std::string corrupt;
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss gradient");
  add_common(grad, grad_opts, false);
  grad->add_option("--instances", instances, "random instances")->check(CLI::PositiveNumber);
  grad->add_option("--corrupt-group", corrupt, "perturb one group's analytic gradient (test hook)")
      ->group("Testing");

  std::string gen_output;
  auto* gen = app.add_subcommand("gen-data", "export the configured synthetic stream as a feature file");
  add_common(gen, gen_opts, false);
  gen->add_option("--output,-o", gen_output, "feature file path");

  std::string ingest_input;
  auto* ingest = app.add_subcommand("ingest", "validate a feature file");
  ingest->add_option("input", ingest_input, "feature file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: Usage: " << one_line(e.what()) << "\n";
    return 2;
  }

  try {
    if (*run) return cmd_run(run_opts);
    if (*sweep) return cmd_sweep(sweep_opts, axis);
    if (*grad) return cmd_gradcheck(grad_opts, instances, corrupt);
    if (*gen) return cmd_gen_data(gen_opts, gen_output);
    if (*ingest) return cmd_ingest(ingest_input);
  } catch (const Error& e) {
    std::cerr << "error: " << one_line(e.what()) << "\n";
    return e.kind() == ErrorKind::ConfigInvalid ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Runtime: " << one_line(e.what()) << "\n";
    return 1;
  }
  return 1;
}
