// Acceptance runner: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   fbfs_acceptance            all criteria
//   fbfs_acceptance 1 2 5      a subset (criterion 9 covers whichever of 5-8 ran)

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "fbfs/fbfs.hpp"
#include "oracles.hpp"

using namespace fbfs;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Criterion 9 bookkeeping: every run of criteria 5-8 goes through here.
struct AccountingTally {
  std::size_t runs = 0;
  std::vector<std::string> violations;
} tally;

std::optional<RunResult> checked_run(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed) {
  ++tally.runs;
  try {
    return run_method(cfg, data, seed);
  } catch (const AccountingError& e) {
    tally.violations.push_back(e.what());
    return std::nullopt;
  }
}

ExperimentConfig base_config(Method m, std::size_t T_f, std::size_t D, std::size_t n, std::size_t k) {
  ExperimentConfig cfg;
  cfg.method = m;
  cfg.T_f = T_f;
  cfg.D = D;
  cfg.n = n;
  cfg.k = k;
  cfg.epsilon = 0.1;
  cfg.c = 1.0;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing " + p.string() + ">";
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 1 ---------------------------------------------------------------------------------
Outcome bonus_grid() {
  const auto t0 = Clock::now();
  std::size_t points = 0;
  double worst = 0.0;
  const double cs[] = {0.0, 0.5, 1.0, 2.0, 3.7};
  for (std::size_t ti = 0; ti < 20; ++ti)
    for (std::size_t ni = 0; ni < 10; ++ni)
      for (double c : cs) {
        const std::size_t t = ti == 0 ? 1 : ti * ti * 7 + 1;
        const std::size_t n = ni == 0 ? 0 : ni * ni * 13;
        const double got = exploration_bonus(t, n, c);
        worst = std::max(worst, std::abs(got - oracle::exploration_bonus(t, n, c)));
        ++points;
      }
  const double secs = since(t0);
  return {points == 1000 && worst <= 1e-12 && secs < 1.0,
          fmt("%zu points, max |diff| %.3g, %.3f s", points, worst, secs)};
}

// 2 ---------------------------------------------------------------------------------
Outcome subset_oracle() {
  const auto t0 = Clock::now();
  std::size_t mismatches = 0, queries = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    auto h = oracle::random_history(seed + 50000, 8, 50);
    const std::size_t d = h.store.d();
    Rng rng(seed);
    for (int q = 0; q < 4; ++q, ++queries) {
      std::vector<std::size_t> f;
      const std::size_t k = 1 + uniform_index(rng, d);
      for (std::size_t i = 0; i < k; ++i) f.push_back(uniform_index(rng, d));
      const FeatureSet s(f);
      if (oracle::view_rows(h.store.extract_subset(s)) != oracle::subset_rows(h.store, *h.pool, s.indices()))
        ++mismatches;
    }
  }
  const double secs = since(t0);
  return {mismatches == 0 && secs < 30.0,
          fmt("1000 histories, %zu queries, %zu mismatches, %.1f s", queries, mismatches, secs)};
}

// 3 ---------------------------------------------------------------------------------
Outcome cli_determinism() {
  const fs::path dir = fs::temp_directory_path() / "fbfs_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  nlohmann::json cfg = {{"dataset", FBFS_ADULT_CSV}, {"schema", FBFS_ADULT_SCHEMA}, {"T_f", 100}, {"D", 25},
                        {"n", 10}, {"k", 3}, {"epsilon", 0.1}, {"c", 1.0}, {"repetitions", 2}};
  if (!fs::exists(FBFS_ADULT_CSV)) return {false, "Adult CSV not found at " FBFS_ADULT_CSV};
  std::ofstream(dir / "exp.json") << cfg.dump(2);
  std::vector<std::string> files;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string(FBFS_CLI) + " run --method FBFS --verbose --seed 7 --config " +
                            (dir / "exp.json").string() + " --out " + (dir / run).string() + " >/dev/null 2>&1";
    if (std::system(cmd.c_str()) != 0) return {false, "CLI exited with an error: " + cmd};
  }
  std::vector<std::string> differ;
  for (const char* f : {"runs.csv", "run-7.log", "run-8.log"}) {
    const auto a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    if (a != b || a.rfind("<missing", 0) == 0) differ.push_back(f);
  }
  std::string detail = "runs.csv, run-7.log, run-8.log compared";
  for (const auto& f : differ) detail += "; differs or missing: " + f;
  return {differ.empty(), detail};
}

// 4 ---------------------------------------------------------------------------------
Outcome stage_invariants() {
  const auto t0 = Clock::now();
  Rng rng(4242);
  std::size_t stages = 0, decisions = 0;
  std::vector<std::string> bad;
  for (int run = 0; run < 200; ++run) {
    const std::size_t d = 2 + uniform_index(rng, 9);
    const std::size_t numeric = uniform_index(rng, d + 1);
    const auto ds = synthesize({600, numeric, d - numeric, uniform_index(rng, d), 0.1 * uniform01(rng), 3}, rng());
    const auto data = prepare_data(ds, 0.2, run);
    auto cfg = base_config(Method::FBFS, 3 + uniform_index(rng, 12), uniform_index(rng, 5), 2 + uniform_index(rng, 8),
                           1 + uniform_index(rng, d));
    cfg.epsilon = uniform01(rng);
    cfg.c = 2.0 * uniform01(rng);
    cfg.classifier.trees = 5 + uniform_index(rng, 10);
    std::ostringstream log;
    run_method(cfg, data, run, &log);

    std::istringstream in(log.str());
    for (std::string line; std::getline(in, line);) {
      const auto j = nlohmann::json::parse(line);
      if (j["event"] == "submit") {
        ++decisions;
        if (j["features"].size() != cfg.k) bad.push_back(fmt("run %d: decision with %zu features", run, j["features"].size()));
      }
      if (j["event"] != "stage") continue;
      ++stages;
      const auto stage = j["stage"].get<std::size_t>();
      const auto chosen = j["chosen"].get<std::vector<std::size_t>>();
      const auto action = j["action"].get<std::size_t>();
      const auto step = j["step"].get<std::size_t>();
      std::set<std::size_t> after(chosen.begin(), chosen.end());
      const bool fresh = after.insert(action).second;
      if (after.size() != stage || !fresh || action >= d)
        bad.push_back(fmt("run %d step %zu stage %zu: |S|=%zu, fresh=%d", run, step, stage, after.size(), fresh));
      for (const auto& s : j["scores"]) {
        const double r = s["r"], rm = s["r_m"], re = s["r_e"];
        const double expect_re = oracle::exploration_bonus(step, s["N"].get<double>(), cfg.c);
        if (std::abs(r - (rm + re)) > 1e-12 || std::abs(re - expect_re) > 1e-12)
          bad.push_back(fmt("run %d step %zu stage %zu: r=%g r_m=%g r_e=%g", run, step, stage, r, rm, re));
        if (std::find(chosen.begin(), chosen.end(), s["a"].get<std::size_t>()) != chosen.end())
          bad.push_back(fmt("run %d step %zu: scored an already chosen feature", run, step));
      }
    }
  }
  std::string detail = fmt("200 runs, %zu decisions, %zu stages, %zu violations, %.1f s", decisions, stages,
                           bad.size(), since(t0));
  if (!bad.empty()) detail += "; first: " + bad.front();
  return {bad.empty() && stages > 0, detail};
}

// 5 ---------------------------------------------------------------------------------
Outcome synthetic_recovery() {
  const auto t0 = Clock::now();
  // d = 10 (5 numeric, 5 categorical); the label is a function of feature 7.
  const std::size_t informative = 7;
  const auto data = prepare_data(synthesize({5000, 5, 5, informative, 0.0, 4}, 2024), 0.2, 0);
  const auto cfg = base_config(Method::FBFS, 100, 5, 10, 2);
  std::size_t hits = 0, low_cv = 0;
  std::string seen;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto r = checked_run(cfg, data, seed);
    if (!r) continue;
    if (r->best.contains(informative)) {
      ++hits;
      if (r->cv.f1 < 0.95) ++low_cv;
    }
    seen += (seed ? " " : "") + std::string("{") + r->best.to_string(',') + "}";
  }
  const double secs = since(t0);
  return {hits >= 18 && low_cv == 0 && secs < 300.0,
          fmt("informative feature in S* for %zu/20 seeds, %zu of those with CV f1 < 0.95, %.1f s; S*: ", hits,
              low_cv, secs) +
              seen};
}

// Adult criteria ----------------------------------------------------------------------

const PreparedData* adult() {
  static std::optional<PreparedData> data;
  static bool tried = false;
  if (!tried) {
    tried = true;
    if (fs::exists(FBFS_ADULT_CSV) && fs::exists(FBFS_ADULT_SCHEMA))
      data = prepare_data(load_csv(FBFS_ADULT_CSV, load_schema(FBFS_ADULT_SCHEMA)), 0.2, 0);
  }
  return data ? &*data : nullptr;
}

std::vector<RunResult> adult_runs(Method m, std::size_t T_f, std::size_t D, std::size_t n, std::size_t k) {
  static std::map<std::tuple<int, std::size_t, std::size_t, std::size_t, std::size_t>, std::vector<RunResult>> cache;
  const auto key = std::tuple(static_cast<int>(m), T_f, D, n, k);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  std::vector<RunResult> out;
  const auto cfg = base_config(m, T_f, D, n, k);
  for (std::uint64_t seed = 0; seed < 20; ++seed)
    if (auto r = checked_run(cfg, *adult(), seed)) out.push_back(*r);
  cache[key] = out;
  return out;
}

Stats stats_of(const std::vector<RunResult>& runs, std::size_t metric) {
  std::vector<double> v;
  for (const auto& r : runs) v.push_back(metric_value(r, metric));
  return compute_stats(v);
}

const Outcome kNoAdult{false, "Adult dataset not found (" FBFS_ADULT_CSV "); run tools/prepare_adult.py"};

// 6
Outcome n_sweep() {
  if (!adult()) return kNoAdult;
  const auto t0 = Clock::now();
  const auto small = adult_runs(Method::FBFS, 100, 75, 10, 3);
  const auto large = adult_runs(Method::FBFS, 100, 75, 200, 3);
  const auto s = stats_of(small, 0), l = stats_of(large, 0);
  const double secs = since(t0);
  return {small.size() == 20 && large.size() == 20 && l.mean > s.mean && l.std < s.std && secs < 1800.0,
          fmt("n=10: mean %.4f std %.4f; n=200: mean %.4f std %.4f; %.1f s", s.mean, s.std, l.mean, l.std, secs)};
}

// 7
Outcome table_one() {
  if (!adult()) return kNoAdult;
  const auto runs = adult_runs(Method::FBFS, 100, 25, 10, 3);
  const auto s = stats_of(runs, 0);
  return {runs.size() == 20 && std::abs(s.mean - 0.518) <= 0.15,
          fmt("mean CV f1 %.4f (std %.4f) over %zu seeds; target 0.518 +/- 0.15", s.mean, s.std, runs.size())};
}

// 8
Outcome method_ordering() {
  if (!adult()) return kNoAdult;
  const auto t0 = Clock::now();
  std::map<Method, std::pair<double, double>> med;
  std::string detail;
  for (auto m : kAllMethods) {
    const auto runs = adult_runs(m, 100, 25, 10, 3);
    med[m] = {stats_of(runs, 1).median, stats_of(runs, 2).median};
    detail += fmt("%s P=%.3f R=%.3f; ", to_string(m).c_str(), med[m].first, med[m].second);
  }
  const auto f = med[Method::FBFS];
  std::vector<std::string> broken;
  for (auto m : {Method::C1, Method::C2}) {
    if (f.first < med[m].first) broken.push_back("precision FBFS < " + to_string(m));
    if (f.second < med[m].second) broken.push_back("recall FBFS < " + to_string(m));
  }
  if (med[Method::UC2].first < f.first - 0.05) broken.push_back("precision UC2 < FBFS - 0.05");
  if (med[Method::UC2].second < f.second - 0.05) broken.push_back("recall UC2 < FBFS - 0.05");
  const double secs = since(t0);
  if (secs >= 7200.0) broken.push_back("runtime over 2 h");
  detail += fmt("%.1f s", secs);
  for (const auto& b : broken) detail += "; violated: " + b;
  return {broken.empty(), detail};
}

// 9
Outcome accounting() {
  std::string detail = fmt("%zu runs checked, %zu violations", tally.runs, tally.violations.size());
  if (!tally.violations.empty()) detail += "; first: " + tally.violations.front();
  return {tally.runs > 0 && tally.violations.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return only.empty() || only.count(id); };

  const std::pair<int, std::pair<const char*, Outcome (*)()>> criteria[] = {
      {1, {"exploration bonus vs closed form", bonus_grid}},
      {2, {"subset extraction vs brute force", subset_oracle}},
      {3, {"byte-identical CLI reruns", cli_determinism}},
      {4, {"selection stage invariants", stage_invariants}},
      {5, {"synthetic recovery", synthetic_recovery}},
      {6, {"n sweep trend on Adult", n_sweep}},
      {7, {"Adult CV f1 ballpark", table_one}},
      {8, {"method ordering on Adult", method_ordering}},
      {9, {"budget and horizon accounting", accounting}},
  };
  for (const auto& [id, c] : criteria) {
    if (!want(id)) continue;
    try {
      report(id, c.first, c.second());
    } catch (const std::exception& e) {
      report(id, c.first, {false, std::string("exception: ") + e.what()});
    }
  }
  return failures == 0 ? 0 : 1;
}
