#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "clocked_run.hpp"
#include "common.hpp"
#include "dataset.hpp"
#include "learner.hpp"
#include "selector.hpp"
#include "simulator.hpp"
#include "store.hpp"

namespace fbfs {

// Methods -----------------------------------------------------------------------

enum class Method { FBFS, C1, C2, C3, UC1, UC2, UC3 };

inline constexpr Method kAllMethods[] = {Method::FBFS, Method::C1,  Method::C2, Method::C3,
                                         Method::UC1,  Method::UC2, Method::UC3};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::FBFS: return "FBFS";
    case Method::C1: return "C1";
    case Method::C2: return "C2";
    case Method::C3: return "C3";
    case Method::UC1: return "UC1";
    case Method::UC2: return "UC2";
    case Method::UC3: return "UC3";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (auto m : kAllMethods)
    if (to_string(m) == s) return m;
  throw ConfigError("unknown method '" + std::string(s) + "' (expected FBFS, C1, C2, C3, UC1, UC2 or UC3)");
}

// Configuration -------------------------------------------------------------------

struct ExperimentConfig {
  std::string dataset;
  std::string schema;
  double test_fraction = 0.2;
  std::uint64_t partition_seed = 0;
  std::size_t T_f = 100;
  std::size_t D = 10;
  std::size_t n = 10;
  std::size_t k = 3;
  double epsilon = 0.1;
  double c = 1.0;
  ClassifierSpec classifier;
  std::optional<Method> method;
  std::size_t repetitions = 20;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  std::size_t cv_folds = 5;
  std::size_t precollect_rows = 1000;  // C3's prior sample
  bool verbose = false;

  PolicyParams policy() const { return {epsilon, c, k}; }

  void validate(std::size_t d) const {
    if (T_f < 1) throw ConfigError("T_f must be >= 1");
    if (n < 1) throw ConfigError("n must be >= 1");
    if (k < 1 || k > d) throw ConfigError("k must lie in [1, d] (d = " + std::to_string(d) + ")");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
    if (!(c >= 0.0)) throw ConfigError("c must be >= 0");
    if (repetitions < 1) throw ConfigError("repetitions must be >= 1");
    if (cv_folds < 2) throw ConfigError("cv_folds must be >= 2");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0,1)");
    if (!method) throw ConfigError("no method given (set \"method\" or pass --method)");
    if (*method == Method::C2 && T_f < D + 1)
      throw ConfigError("C2 needs T_f >= D + 1 to make at least one decision");
    classifier.validate();
  }
};

namespace detail {

template <typename T>
T get_checked(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base_dir) {
  if (p.empty()) return p;
  std::filesystem::path path(p);
  if (path.is_absolute() || base_dir.empty()) return p;
  return (base_dir / path).lexically_normal().string();
}

}  // namespace detail

/// Parses an experiment config object. Unknown keys are errors; epsilon and c
/// must be given explicitly. Relative paths resolve against `base_dir`.
inline ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  static const std::set<std::string> keys = {
      "dataset", "schema",     "test_fraction", "partition_seed", "T_f",       "D",
      "n",       "k",          "epsilon",       "c",              "classifier", "method",
      "repetitions", "seed",   "output_dir",    "cv_folds",       "precollect_rows", "verbose"};
  static const std::set<std::string> classifier_keys = {"trees", "max_depth", "min_samples_leaf",
                                                        "features_per_split", "max_bins", "seed"};
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!keys.count(key)) throw ConfigError("config: unknown key '" + key + "'");
  for (const char* required : {"T_f", "D", "n", "k", "epsilon", "c"})
    if (!j.contains(required)) throw ConfigError(std::string("config: missing required key '") + required + "'");

  using detail::get_checked;
  ExperimentConfig c;
  if (j.contains("dataset")) c.dataset = detail::resolve_path(get_checked<std::string>(j, "dataset"), base_dir);
  if (j.contains("schema")) c.schema = detail::resolve_path(get_checked<std::string>(j, "schema"), base_dir);
  if (j.contains("test_fraction")) c.test_fraction = get_checked<double>(j, "test_fraction");
  if (j.contains("partition_seed")) c.partition_seed = get_checked<std::uint64_t>(j, "partition_seed");
  c.T_f = get_checked<std::size_t>(j, "T_f");
  c.D = get_checked<std::size_t>(j, "D");
  c.n = get_checked<std::size_t>(j, "n");
  c.k = get_checked<std::size_t>(j, "k");
  c.epsilon = get_checked<double>(j, "epsilon");
  c.c = get_checked<double>(j, "c");
  if (j.contains("method")) c.method = parse_method(get_checked<std::string>(j, "method"));
  if (j.contains("repetitions")) c.repetitions = get_checked<std::size_t>(j, "repetitions");
  if (j.contains("seed")) c.seed = get_checked<std::uint64_t>(j, "seed");
  if (j.contains("output_dir")) c.output_dir = detail::resolve_path(get_checked<std::string>(j, "output_dir"), base_dir);
  if (j.contains("cv_folds")) c.cv_folds = get_checked<std::size_t>(j, "cv_folds");
  if (j.contains("precollect_rows")) c.precollect_rows = get_checked<std::size_t>(j, "precollect_rows");
  if (j.contains("verbose")) c.verbose = get_checked<bool>(j, "verbose");
  if (j.contains("classifier")) {
    const auto& cj = j.at("classifier");
    if (!cj.is_object()) throw ConfigError("config: 'classifier' must be an object");
    for (const auto& [key, _] : cj.items())
      if (!classifier_keys.count(key)) throw ConfigError("config: unknown classifier key '" + key + "'");
    if (cj.contains("trees")) c.classifier.trees = get_checked<std::size_t>(cj, "trees");
    if (cj.contains("max_depth")) c.classifier.max_depth = get_checked<std::size_t>(cj, "max_depth");
    if (cj.contains("min_samples_leaf")) c.classifier.min_samples_leaf = get_checked<std::size_t>(cj, "min_samples_leaf");
    if (cj.contains("features_per_split"))
      c.classifier.features_per_split = get_checked<std::size_t>(cj, "features_per_split");
    if (cj.contains("max_bins")) c.classifier.max_bins = get_checked<std::size_t>(cj, "max_bins");
    if (cj.contains("seed")) c.classifier.seed = get_checked<std::uint64_t>(cj, "seed");
  }
  return c;
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

inline ExperimentConfig load_config(const std::string& path) {
  return config_from_json(read_json_file(path), std::filesystem::path(path).parent_path());
}

// Data preparation ------------------------------------------------------------------

/// The acquisition pool and held-out test set shared by every run of a config.
struct PreparedData {
  std::shared_ptr<const Dataset> pool;
  std::shared_ptr<const Dataset> test;
};

inline PreparedData prepare_data(const Dataset& source, double test_fraction, std::uint64_t partition_seed) {
  auto p = partition(source, test_fraction, partition_seed);
  return {std::make_shared<const Dataset>(std::move(p.acquisition_pool)),
          std::make_shared<const Dataset>(std::move(p.test_set))};
}

inline PreparedData prepare_data(const ExperimentConfig& cfg) {
  if (cfg.dataset.empty() || cfg.schema.empty()) throw ConfigError("config needs 'dataset' and 'schema' paths");
  const auto schema = load_schema(cfg.schema);
  return prepare_data(load_csv(cfg.dataset, schema), cfg.test_fraction, cfg.partition_seed);
}

// Schedules ----------------------------------------------------------------------------

/// Instances per decision for C2: n * T_f * (D+1) / (T_f + D), rounded, at least 1.
inline std::size_t c2_batch_size(std::size_t n, std::size_t T_f, std::size_t D) {
  const double v = static_cast<double>(n) * static_cast<double>(T_f) * static_cast<double>(D + 1) /
                   static_cast<double>(T_f + D);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v)));
}

inline std::size_t c2_rounds(std::size_t T_f, std::size_t D) { return T_f / (D + 1); }

/// Instances per step for UC1: n * k / d, rounded, at least 1.
inline std::size_t uc1_batch_size(std::size_t n, std::size_t k, std::size_t d) {
  const double v = static_cast<double>(n) * static_cast<double>(k) / static_cast<double>(d);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(v)));
}

struct Schedule {
  std::size_t decision_steps = 0;  // clock steps during which the policy may act
  std::size_t period = 1;          // a decision every `period` steps
  std::size_t rounds = 0;          // number of decisions
  std::size_t batch = 0;           // instances per decision
  bool all_features = false;

  std::size_t expected_instances() const { return rounds * batch; }
  bool decides_at(std::size_t t) const { return (t - 1) % period == 0 && (t - 1) / period < rounds; }
};

inline Schedule schedule_for(Method m, const ExperimentConfig& c, std::size_t d) {
  switch (m) {
    case Method::FBFS:
    case Method::C1:
    case Method::C3: return {c.T_f, 1, c.T_f, c.n, false};
    case Method::C2: return {c.T_f, c.D + 1, c2_rounds(c.T_f, c.D), c2_batch_size(c.n, c.T_f, c.D), false};
    case Method::UC1: return {c.T_f, 1, c.T_f, uc1_batch_size(c.n, c.k, d), true};
    case Method::UC2: return {c.T_f, 1, c.T_f, c.n, true};
    case Method::UC3: return {c.T_f * (c.D + 1), c.D + 1, c.T_f, c.n, false};
  }
  throw Error("unknown method");
}

// Results --------------------------------------------------------------------------------

struct RunResult {
  Method method = Method::FBFS;
  std::uint64_t seed = 0;
  std::size_t T_f = 0, D = 0, n = 0, k = 0;
  double epsilon = 0.0, c = 0.0;
  FeatureSet best;
  std::string best_names;
  MetricReport cv;    // cross-validation on the collected data for the chosen subset
  MetricReport test;  // model trained on the collected data, scored on the held-out set
  bool cv_insufficient = false;
  std::size_t instances = 0;
  std::size_t decisions = 0;
  std::size_t last_decision_step = 0;
  std::size_t horizon = 0;
  double seconds = 0.0;
};

class AccountingError : public Error {
 public:
  using Error::Error;
};

/// Budget, horizon, delay and no-replacement checks for a finished run.
inline std::vector<std::string> accounting_violations(Method m, const ExperimentConfig& cfg, std::size_t d,
                                                      const RunHistory& h) {
  std::vector<std::string> out;
  const auto sch = schedule_for(m, cfg, d);
  std::size_t submitted = 0, delivered = 0;
  for (const auto& r : h.decisions) {
    submitted += r.instance_count;
    if (r.status != DeliveryStatus::delivered || !r.step_delivered)
      out.push_back("decision " + std::to_string(r.decision_id) + " never delivered");
    else if (*r.step_delivered - r.step_submitted != cfg.D)
      out.push_back("decision " + std::to_string(r.decision_id) + " delivered after " +
                    std::to_string(*r.step_delivered - r.step_submitted) + " steps");
    const std::size_t expected_k = sch.all_features ? d : cfg.k;
    if (r.features.size() != expected_k)
      out.push_back("decision " + std::to_string(r.decision_id) + " has " + std::to_string(r.features.size()) +
                    " features");
  }
  std::unordered_set<std::size_t> seen;
  for (const auto& b : h.batches) {
    delivered += b.y.size();
    for (auto row : b.pool_rows)
      if (!seen.insert(row).second) out.push_back("pool row " + std::to_string(row) + " delivered twice");
  }
  if (submitted != delivered) out.push_back("submitted " + std::to_string(submitted) + " != delivered " + std::to_string(delivered));
  if (delivered != sch.expected_instances())
    out.push_back(to_string(m) + " collected " + std::to_string(delivered) + " instances, expected " +
                  std::to_string(sch.expected_instances()));
  if (h.decisions.size() != sch.rounds)
    out.push_back(to_string(m) + " made " + std::to_string(h.decisions.size()) + " decisions, expected " +
                  std::to_string(sch.rounds));
  switch (m) {
    case Method::C2:
      if (h.last_decision_step > cfg.T_f) out.push_back("C2 decided after T_f");
      break;
    case Method::UC3:
      if (h.final_step != cfg.T_f * (cfg.D + 1))
        out.push_back("UC3 horizon " + std::to_string(h.final_step) + " != T_f*(D+1)");
      break;
    default:
      if (h.last_decision_step != cfg.T_f) out.push_back(to_string(m) + " last decision not at T_f");
      if (h.final_step != cfg.T_f + cfg.D) out.push_back(to_string(m) + " horizon != T_f + D");
  }
  return out;
}

// Single run ----------------------------------------------------------------------------------

/// Line-delimited JSON trace of one run.
class RunLog {
 public:
  explicit RunLog(std::ostream* out) : out_(out) {}
  bool enabled() const { return out_ != nullptr; }
  void write(const nlohmann::json& j) {
    if (out_) *out_ << j.dump() << '\n';
  }

 private:
  std::ostream* out_;
};

inline nlohmann::json to_json(const StageRecord& st, std::size_t step) {
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& s : st.scores)
    scores.push_back({{"a", s.feature}, {"r_m", s.r_m}, {"r_e", s.r_e}, {"r", s.r}, {"N", s.exploration_n},
                      {"rows", s.rows}, {"p", s.covering}});
  return {{"event", "stage"},          {"step", step},           {"stage", st.stage},
          {"chosen", st.chosen_before.indices()}, {"scores", scores}, {"argmax", st.argmax},
          {"action", st.action},       {"explored", st.explored}};
}

namespace seeds {
inline std::uint64_t acquisition(std::uint64_t s) { return derive_seed(s, 0xacc0ULL); }
inline std::uint64_t policy(std::uint64_t s) { return derive_seed(s, 0x9011ULL); }
inline std::uint64_t reward(std::uint64_t s) { return derive_seed(s, 0x4e3aULL); }
inline std::uint64_t precollect(std::uint64_t s) { return derive_seed(s, 0x94ecULL); }
inline std::uint64_t evaluation(std::uint64_t s) { return derive_seed(s, 0xe7a1ULL); }
}  // namespace seeds

/// Runs one method's acquisition schedule and both evaluations.
inline RunResult run_method(const ExperimentConfig& cfg, const PreparedData& data, std::uint64_t seed,
                            std::ostream* log_stream = nullptr) {
  const auto started = std::chrono::steady_clock::now();
  const FeatureSchema& schema = data.pool->schema;
  const std::size_t d = schema.d();
  cfg.validate(d);
  const Method m = *cfg.method;
  const auto sch = schedule_for(m, cfg, d);
  RunLog log(log_stream);
  log.write({{"event", "run"}, {"method", to_string(m)}, {"seed", seed}, {"T_f", cfg.T_f}, {"D", cfg.D},
             {"n", cfg.n}, {"k", cfg.k}, {"epsilon", cfg.epsilon}, {"c", cfg.c}});

  std::shared_ptr<const Dataset> pool = data.pool;
  FeatureSet fixed;
  if (sch.all_features) fixed = FeatureSet::all(d);
  if (m == Method::C3) {
    const double frac = static_cast<double>(cfg.precollect_rows) / static_cast<double>(pool->size());
    auto [rest, prior] = stratified_holdout(pool->labels, frac, seeds::precollect(seed));
    const auto prior_data = pool->subset(prior);
    const auto ranking = importance_topk(prior_data, cfg.k, cfg.classifier.with_seed(derive_seed(seeds::precollect(seed), 1)));
    fixed = ranking.top;
    pool = std::make_shared<const Dataset>(pool->subset(rest));
    log.write({{"event", "precollect"}, {"rows", prior.size()}, {"importance", ranking.importance},
               {"features", fixed.indices()}});
  }

  Simulator sim(pool, cfg.D, seeds::acquisition(seed));
  AcquiredStore store(d);
  Rng policy_rng(seeds::policy(seed));
  const auto params = cfg.policy();

  ClockedPolicy policy = [&](std::size_t t, const AcquiredStore& st) -> std::optional<AcquisitionRequest> {
    if (!sch.decides_at(t)) return std::nullopt;
    switch (m) {
      case Method::FBFS:
      case Method::C2:
      case Method::UC3: {
        const RewardContext ctx{st, schema, cfg.classifier, seeds::reward(seed), t};
        auto sel = select_features(ctx, params, policy_rng);
        if (log.enabled())
          for (const auto& stage : sel.stages) log.write(to_json(stage, t));
        return AcquisitionRequest{sel.features, sch.batch};
      }
      case Method::C1: return AcquisitionRequest{random_policy(policy_rng, cfg.k, d), sch.batch};
      default: return AcquisitionRequest{fixed, sch.batch};
    }
  };
  RunHooks hooks;
  if (log.enabled()) {
    hooks.on_submit = [&](const DecisionRecord& r) { log.write(to_json(r)); };
    hooks.on_deliver = [&](const DataBatch& b) { log.write(to_json(b, true)); };
  }
  const auto history = run_clocked_policy(sim, store, sch.decision_steps, policy, hooks);

  if (auto v = accounting_violations(m, cfg, d, history); !v.empty()) {
    std::string msg = to_string(m) + " seed " + std::to_string(seed) + ": accounting violated:";
    for (const auto& s : v) msg += "\n  " + s;
    throw AccountingError(msg);
  }

  RunResult res;
  res.method = m;
  res.seed = seed;
  res.T_f = cfg.T_f;
  res.D = cfg.D;
  res.n = cfg.n;
  res.k = cfg.k;
  res.epsilon = cfg.epsilon;
  res.c = cfg.c;
  res.instances = store.delivered_rows();
  res.decisions = history.decisions.size();
  res.last_decision_step = history.last_decision_step;
  res.horizon = history.final_step;

  const auto eval_seed = seeds::evaluation(seed);
  CvReport cv;
  if (m == Method::FBFS || m == Method::C1 || m == Method::C2 || m == Method::UC3) {
    auto best = best_subset(store, schema, cfg.classifier, cfg.cv_folds, eval_seed);
    if (log.enabled()) {
      nlohmann::json cands = nlohmann::json::array();
      for (const auto& c : best.candidates)
        cands.push_back({{"features", c.features.indices()}, {"rows", c.rows}, {"cv_f1", c.cv.f1},
                         {"weighted", c.weighted}});
      log.write({{"event", "best_subset"}, {"candidates", cands}, {"chosen", best.features.indices()}});
    }
    res.best = best.features;
    cv = std::move(best.cv);
  } else {
    res.best = fixed;
    cv = score_candidate(store, schema, cfg.classifier, fixed, cfg.cv_folds, eval_seed).cv;
  }
  res.best_names = schema.describe(res.best);
  res.cv_insufficient = cv.insufficient;
  res.cv.f1 = cv.f1;
  res.cv.precision = cv.precision;
  res.cv.recall = cv.recall;

  const auto view = store.extract_subset(res.best);
  if (view.rows() >= 2) {
    const auto model = train(cfg.classifier.with_seed(derive_seed(eval_seed, 0xf17aULL)),
                             encode(view.X, res.best, schema), view.y);
    const auto pred = predict(model, encode(data.test->table, res.best, schema));
    res.test = f1(data.test->labels, pred);
  }
  log.write({{"event", "result"},         {"features", res.best.indices()}, {"instances", res.instances},
             {"cv_f1", res.cv.f1},         {"cv_precision", res.cv.precision}, {"cv_recall", res.cv.recall},
             {"test_f1", res.test.f1},     {"test_precision", res.test.precision},
             {"test_recall", res.test.recall}});
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return res;
}

// Aggregation -----------------------------------------------------------------------------------

struct Stats {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation (n - 1); 0 for a single value
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return 0.0;
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline Stats compute_stats(std::vector<double> v) {
  Stats s;
  if (v.empty()) return s;
  double sum = 0.0;
  for (double x : v) sum += x;
  s.mean = sum / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  std::sort(v.begin(), v.end());
  s.median = quantile_sorted(v, 0.5);
  s.q1 = quantile_sorted(v, 0.25);
  s.q3 = quantile_sorted(v, 0.75);
  return s;
}

inline constexpr const char* kMetricNames[] = {"cv_f1",   "cv_precision",   "cv_recall",
                                               "test_f1", "test_precision", "test_recall"};

inline double metric_value(const RunResult& r, std::size_t metric) {
  switch (metric) {
    case 0: return r.cv.f1;
    case 1: return r.cv.precision;
    case 2: return r.cv.recall;
    case 3: return r.test.f1;
    case 4: return r.test.precision;
    case 5: return r.test.recall;
  }
  throw Error("unknown metric");
}

struct GridKey {
  std::size_t T_f = 0, D = 0, n = 0, k = 0;
  Method method = Method::FBFS;

  auto tie() const { return std::tuple(T_f, D, n, k, static_cast<int>(method)); }
  friend bool operator<(const GridKey& a, const GridKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const GridKey& a, const GridKey& b) { return a.tie() == b.tie(); }
};

inline GridKey key_of(const RunResult& r) { return {r.T_f, r.D, r.n, r.k, r.method}; }

struct AggregateResult {
  GridKey key;
  std::size_t runs = 0;
  Stats metrics[6];  // indexed like kMetricNames
  std::vector<std::pair<double, double>> cv_pr;    // per-run (precision, recall), by seed
  std::vector<std::pair<double, double>> test_pr;

  const Stats& cv_f1() const { return metrics[0]; }
  const Stats& test_f1() const { return metrics[3]; }
};

/// Groups runs by grid point; within a group runs are ordered by seed so the
/// result does not depend on input order.
inline std::vector<AggregateResult> aggregate(std::vector<RunResult> runs) {
  std::stable_sort(runs.begin(), runs.end(), [](const RunResult& a, const RunResult& b) {
    if (key_of(a) < key_of(b)) return true;
    if (key_of(b) < key_of(a)) return false;
    return a.seed < b.seed;
  });
  std::vector<AggregateResult> out;
  for (std::size_t i = 0; i < runs.size();) {
    std::size_t j = i;
    while (j < runs.size() && key_of(runs[j]) == key_of(runs[i])) ++j;
    AggregateResult a;
    a.key = key_of(runs[i]);
    a.runs = j - i;
    for (std::size_t m = 0; m < 6; ++m) {
      std::vector<double> v;
      for (std::size_t r = i; r < j; ++r) v.push_back(metric_value(runs[r], m));
      a.metrics[m] = compute_stats(std::move(v));
    }
    for (std::size_t r = i; r < j; ++r) {
      a.cv_pr.emplace_back(runs[r].cv.precision, runs[r].cv.recall);
      a.test_pr.emplace_back(runs[r].test.precision, runs[r].test.recall);
    }
    out.push_back(std::move(a));
    i = j;
  }
  return out;
}

// CSV output ---------------------------------------------------------------------------------------

inline constexpr const char* kRunsHeader =
    "method,T_f,D,n,k,epsilon,c,seed,features,feature_names,instances,decisions,horizon,"
    "cv_f1,cv_precision,cv_recall,test_f1,test_precision,test_recall";

inline void write_runs(std::ostream& out, const std::vector<RunResult>& runs) {
  out << kRunsHeader << '\n';
  for (const auto& r : runs) {
    out << to_string(r.method) << ',' << r.T_f << ',' << r.D << ',' << r.n << ',' << r.k << ','
        << format_double(r.epsilon) << ',' << format_double(r.c) << ',' << r.seed << ',' << r.best.to_string(';')
        << ',' << r.best_names << ',' << r.instances << ',' << r.decisions << ',' << r.horizon;
    for (std::size_t m = 0; m < 6; ++m) out << ',' << format_double(metric_value(r, m));
    out << '\n';
  }
}

inline std::vector<RunResult> read_runs(std::istream& in, const std::string& origin = "runs.csv") {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kRunsHeader) throw DataError(origin + ": unexpected header");
  std::vector<RunResult> out;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 19) throw DataError(origin + ": row " + std::to_string(row) + " has " + std::to_string(c.size()) + " cells");
    auto num = [&](std::size_t i) {
      auto v = parse_double(c[i]);
      if (!v) throw DataError(origin + ": row " + std::to_string(row) + ": bad number '" + c[i] + "'");
      return *v;
    };
    auto whole = [&](std::size_t i) { return static_cast<std::size_t>(std::stoull(c[i])); };
    RunResult r;
    r.method = parse_method(c[0]);
    r.T_f = whole(1);
    r.D = whole(2);
    r.n = whole(3);
    r.k = whole(4);
    r.epsilon = num(5);
    r.c = num(6);
    r.seed = std::stoull(c[7]);
    std::vector<std::size_t> f;
    std::stringstream ss(c[8]);
    for (std::string tok; std::getline(ss, tok, ';');)
      if (!tok.empty()) f.push_back(std::stoull(tok));
    r.best = FeatureSet(std::move(f));
    r.best_names = c[9];
    r.instances = whole(10);
    r.decisions = whole(11);
    r.horizon = whole(12);
    r.cv.f1 = num(13);
    r.cv.precision = num(14);
    r.cv.recall = num(15);
    r.test.f1 = num(16);
    r.test.precision = num(17);
    r.test.recall = num(18);
    out.push_back(std::move(r));
  }
  return out;
}

inline constexpr const char* kAggregateHeader = "T_f,D,n,k,method,runs,cv_mean,cv_std,test_mean,test_std";

/// One table row per grid point: mean and sample std of CV and held-out f1.
inline void emit_tables(std::ostream& out, const std::vector<AggregateResult>& aggs) {
  out << kAggregateHeader << '\n';
  for (const auto& a : aggs)
    out << a.key.T_f << ',' << a.key.D << ',' << a.key.n << ',' << a.key.k << ',' << to_string(a.key.method) << ','
        << a.runs << ',' << format_double(a.cv_f1().mean) << ',' << format_double(a.cv_f1().std) << ','
        << format_double(a.test_f1().mean) << ',' << format_double(a.test_f1().std) << '\n';
}

inline void emit_summary(std::ostream& out, const std::vector<AggregateResult>& aggs) {
  out << "T_f,D,n,k,method,metric,mean,std,median,q1,q3\n";
  for (const auto& a : aggs)
    for (std::size_t m = 0; m < 6; ++m) {
      const auto& s = a.metrics[m];
      out << a.key.T_f << ',' << a.key.D << ',' << a.key.n << ',' << a.key.k << ',' << to_string(a.key.method)
          << ',' << kMetricNames[m] << ',' << format_double(s.mean) << ',' << format_double(s.std) << ','
          << format_double(s.median) << ',' << format_double(s.q1) << ',' << format_double(s.q3) << '\n';
    }
}

struct PlotRecord {
  Method method = Method::FBFS;
  std::size_t T_f = 0, D = 0, n = 0, k = 0;
  std::uint64_t seed = 0;
  std::string mode;  // "cv" or "test"
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline constexpr const char* kPlotHeader = "method,T_f,D,n,k,seed,eval_mode,precision,recall,f1";

inline std::vector<PlotRecord> plot_records(const std::vector<RunResult>& runs) {
  std::vector<PlotRecord> out;
  for (const auto& r : runs) {
    out.push_back({r.method, r.T_f, r.D, r.n, r.k, r.seed, "cv", r.cv.precision, r.cv.recall, r.cv.f1});
    out.push_back({r.method, r.T_f, r.D, r.n, r.k, r.seed, "test", r.test.precision, r.test.recall, r.test.f1});
  }
  return out;
}

inline void emit_plot_data(std::ostream& out, const std::vector<RunResult>& runs) {
  out << kPlotHeader << '\n';
  for (const auto& p : plot_records(runs))
    out << to_string(p.method) << ',' << p.T_f << ',' << p.D << ',' << p.n << ',' << p.k << ',' << p.seed << ','
        << p.mode << ',' << format_double(p.precision) << ',' << format_double(p.recall) << ','
        << format_double(p.f1) << '\n';
}

inline std::vector<PlotRecord> read_plot_data(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || trim(line) != kPlotHeader) throw DataError("plotdata.csv: unexpected header");
  std::vector<PlotRecord> out;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto c = split_csv_line(line);
    if (c.size() != 10) throw DataError("plotdata.csv: bad row '" + line + "'");
    PlotRecord p;
    p.method = parse_method(c[0]);
    p.T_f = std::stoull(c[1]);
    p.D = std::stoull(c[2]);
    p.n = std::stoull(c[3]);
    p.k = std::stoull(c[4]);
    p.seed = std::stoull(c[5]);
    p.mode = c[6];
    p.precision = *parse_double(c[7]);
    p.recall = *parse_double(c[8]);
    p.f1 = *parse_double(c[9]);
    out.push_back(std::move(p));
  }
  return out;
}

// Orchestration --------------------------------------------------------------------------------------

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

/// Writes runs.csv, aggregate.csv, summary.csv, plotdata.csv (deterministic)
/// and timings.csv (wall clock) into `dir`.
inline std::vector<AggregateResult> write_outputs(const std::filesystem::path& dir, const std::vector<RunResult>& runs,
                                                  bool with_timings = true) {
  std::filesystem::create_directories(dir);
  const auto aggs = aggregate(runs);
  std::ostringstream r, a, s, p, t;
  write_runs(r, runs);
  emit_tables(a, aggs);
  emit_summary(s, aggs);
  emit_plot_data(p, runs);
  t << "method,T_f,D,n,k,seed,seconds\n";
  for (const auto& x : runs)
    t << to_string(x.method) << ',' << x.T_f << ',' << x.D << ',' << x.n << ',' << x.k << ',' << x.seed << ','
      << format_double(x.seconds) << '\n';
  write_text(dir / "runs.csv", r.str());
  write_text(dir / "aggregate.csv", a.str());
  write_text(dir / "summary.csv", s.str());
  write_text(dir / "plotdata.csv", p.str());
  if (with_timings) write_text(dir / "timings.csv", t.str());
  return aggs;
}

/// Runs seeds base .. base + R - 1. When `log_dir` is set and the config is
/// verbose, each run's trace goes to <log_dir>/run-<seed>.log.
inline std::vector<RunResult> run_repetitions(const ExperimentConfig& cfg, const PreparedData& data,
                                              const std::filesystem::path& log_dir = {},
                                              const std::function<void(const RunResult&)>& progress = {}) {
  std::vector<RunResult> out;
  for (std::size_t i = 0; i < cfg.repetitions; ++i) {
    const std::uint64_t seed = cfg.seed + i;
    try {
      std::unique_ptr<std::ofstream> log;
      if (cfg.verbose && !log_dir.empty()) {
        std::filesystem::create_directories(log_dir);
        log = std::make_unique<std::ofstream>(log_dir / ("run-" + std::to_string(seed) + ".log"), std::ios::binary);
      }
      out.push_back(run_method(cfg, data, seed, log.get()));
      if (progress) progress(out.back());
    } catch (const AccountingError&) {
      throw;
    } catch (const BudgetExceeded& e) {
      throw Error("seed " + std::to_string(seed) + ": " + e.what());
    } catch (const Error& e) {
      throw Error("seed " + std::to_string(seed) + ": " + e.what());
    }
  }
  return out;
}

/// Expands a grid file: {"base": <config object or path>, "methods": [...], "points": [{overrides}...]}.
/// Each point is merged over the base; with "methods" every point runs once per method.
inline std::vector<ExperimentConfig> load_grid(const std::string& path) {
  const auto j = read_json_file(path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  for (const auto& [key, _] : j.items())
    if (key != "base" && key != "methods" && key != "points") throw ConfigError("grid: unknown key '" + key + "'");
  nlohmann::json base;
  std::filesystem::path base_dir = dir;
  if (!j.contains("base")) throw ConfigError("grid: missing 'base'");
  if (j.at("base").is_string()) {
    const auto p = detail::resolve_path(j.at("base").get<std::string>(), dir);
    base = read_json_file(p);
    base_dir = std::filesystem::path(p).parent_path();
  } else {
    base = j.at("base");
  }
  std::vector<nlohmann::json> points;
  if (j.contains("points")) {
    for (const auto& p : j.at("points")) points.push_back(p);
  } else {
    points.push_back(nlohmann::json::object());
  }
  std::vector<std::string> methods;
  if (j.contains("methods")) methods = j.at("methods").get<std::vector<std::string>>();

  std::vector<ExperimentConfig> out;
  for (const auto& p : points) {
    if (!p.is_object()) throw ConfigError("grid: every point must be an object");
    auto merged = base;
    merged.update(p);
    if (methods.empty()) {
      out.push_back(config_from_json(merged, base_dir));
    } else {
      for (const auto& m : methods) {
        merged["method"] = m;
        out.push_back(config_from_json(merged, base_dir));
      }
    }
  }
  return out;
}

}  // namespace fbfs
