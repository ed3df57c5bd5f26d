// Command-line front end for the acquisition bench.
//
//   fbfs run    --config exp.json [--method FBFS] [--seed 0] [--reps 20] [--out dir] [--verbose]
//   fbfs grid   --config grid.json [--seed 0] [--reps 20] [--out dir] [--verbose]
//   fbfs report --out dir

#include <cstdio>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "fbfs/fbfs.hpp"

namespace {

struct Overrides {
  std::string method;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps;
  std::string out;
  bool verbose = false;

  void apply(fbfs::ExperimentConfig& cfg) const {
    if (!method.empty()) cfg.method = fbfs::parse_method(method);
    if (seed) cfg.seed = *seed;
    if (reps) cfg.repetitions = *reps;
    if (!out.empty()) cfg.output_dir = out;
    if (verbose) cfg.verbose = true;
  }
};

void print_table(const std::vector<fbfs::AggregateResult>& aggs) {
  std::printf("%6s %5s %5s %3s %-5s %4s %8s %8s %8s %8s\n", "T_f", "D", "n", "k", "meth", "runs", "cv_mean",
              "cv_std", "test_mean", "test_std");
  for (const auto& a : aggs)
    std::printf("%6zu %5zu %5zu %3zu %-5s %4zu %8.4f %8.4f %8.4f %8.4f\n", a.key.T_f, a.key.D, a.key.n, a.key.k,
                fbfs::to_string(a.key.method).c_str(), a.runs, a.cv_f1().mean, a.cv_f1().std, a.test_f1().mean,
                a.test_f1().std);
}

void progress(const fbfs::RunResult& r) {
  std::fprintf(stderr, "  %-4s seed %-4llu S*={%s} cv_f1=%.4f test_f1=%.4f (%.1fs)\n", fbfs::to_string(r.method).c_str(),
               static_cast<unsigned long long>(r.seed), r.best_names.c_str(), r.cv.f1, r.test.f1, r.seconds);
}

int cmd_run(const std::string& config_path, const Overrides& ov) {
  auto cfg = fbfs::load_config(config_path);
  ov.apply(cfg);
  const auto data = fbfs::prepare_data(cfg);
  cfg.validate(data.pool->d());
  const std::filesystem::path out = cfg.output_dir;
  std::fprintf(stderr, "%s: T_f=%zu D=%zu n=%zu k=%zu, %zu run(s)\n", fbfs::to_string(*cfg.method).c_str(), cfg.T_f,
               cfg.D, cfg.n, cfg.k, cfg.repetitions);
  const auto runs = fbfs::run_repetitions(cfg, data, out, progress);
  print_table(fbfs::write_outputs(out, runs));
  return 0;
}

int cmd_grid(const std::string& grid_path, const Overrides& ov) {
  auto configs = fbfs::load_grid(grid_path);
  std::map<std::tuple<std::string, std::string, double, std::uint64_t>, fbfs::PreparedData> cache;
  std::vector<fbfs::RunResult> all;
  std::filesystem::path out;
  for (auto& cfg : configs) {
    ov.apply(cfg);
    out = cfg.output_dir;
    const auto key = std::tuple(cfg.dataset, cfg.schema, cfg.test_fraction, cfg.partition_seed);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, fbfs::prepare_data(cfg)).first;
    cfg.validate(it->second.pool->d());
    const std::string label = fbfs::to_string(*cfg.method) + "_T" + std::to_string(cfg.T_f) + "_D" +
                              std::to_string(cfg.D) + "_n" + std::to_string(cfg.n) + "_k" + std::to_string(cfg.k);
    std::fprintf(stderr, "%s, %zu run(s)\n", label.c_str(), cfg.repetitions);
    auto runs = fbfs::run_repetitions(cfg, it->second, out / "logs" / label, progress);
    all.insert(all.end(), runs.begin(), runs.end());
  }
  if (configs.empty()) out = ov.out.empty() ? std::filesystem::path("out") : std::filesystem::path(ov.out);
  print_table(fbfs::write_outputs(out, all));
  return 0;
}

int cmd_report(const std::string& dir) {
  std::ifstream in(std::filesystem::path(dir) / "runs.csv");
  if (!in) throw fbfs::Error("no runs.csv in '" + dir + "'");
  const auto runs = fbfs::read_runs(in);
  print_table(fbfs::write_outputs(dir, runs, false));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained delayed data acquisition bench"};
  app.require_subcommand(1);

  Overrides ov;
  std::string config;
  std::uint64_t seed = 0;
  std::size_t reps = 0;

  auto add_common = [&](CLI::App* sub, bool with_method) {
    sub->add_option("--config", config, "Experiment config (run) or grid file (grid)")->required()->check(CLI::ExistingFile);
    if (with_method) sub->add_option("--method", ov.method, "FBFS, C1, C2, C3, UC1, UC2 or UC3");
    sub->add_option("--seed", seed, "Base seed");
    sub->add_option("--reps", reps, "Repetitions (seeds base..base+reps-1)");
    sub->add_option("--out", ov.out, "Output directory");
    sub->add_flag("--verbose", ov.verbose, "Write per-run decision/reward traces");
  };
  auto* run = app.add_subcommand("run", "Run one method at one grid point");
  add_common(run, true);
  auto* grid = app.add_subcommand("grid", "Run every point of a parameter grid file");
  add_common(grid, false);
  auto* report = app.add_subcommand("report", "Re-aggregate the runs.csv stored in --out");
  report->add_option("--out", ov.out, "Directory holding runs.csv")->required();

  CLI11_PARSE(app, argc, argv);

  for (auto* sub : {run, grid}) {
    if (!sub->parsed()) continue;
    if (sub->count("--seed")) ov.seed = seed;
    if (sub->count("--reps")) ov.reps = reps;
  }

  try {
    if (run->parsed()) return cmd_run(config, ov);
    if (grid->parsed()) return cmd_grid(config, ov);
    return cmd_report(ov.out);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
