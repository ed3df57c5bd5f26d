#pragma once

#include <cmath>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"
#include "learner.hpp"
#include "store.hpp"

namespace fbfs {

/// UCB-style bonus c * sqrt(ln t / (N + 1)); zero at t = 1.
inline double exploration_bonus(std::size_t t, std::size_t n, double c) {
  if (t < 1) throw Error("exploration_bonus: step must be >= 1");
  return c * std::sqrt(std::log(static_cast<double>(t)) / (static_cast<double>(n) + 1.0));
}

struct PolicyParams {
  double epsilon = 0.1;
  double c = 1.0;
  std::size_t k = 1;

  void validate(std::size_t d) const {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("epsilon must lie in [0,1]");
    if (!(c >= 0.0)) throw ConfigError("c must be >= 0");
    if (k < 1 || k > d) throw ConfigError("k must lie in [1, d]");
  }
};

/// Minimum rows for a performance evaluation (a 0.8/0.2 split needs a test row).
inline constexpr std::size_t kMinRewardRows = 5;
inline constexpr double kTrainRatio = 0.8;

/// Everything reward evaluation reads. The store must only contain data that
/// is visible at `step`.
struct RewardContext {
  const AcquiredStore& store;
  const FeatureSchema& schema;
  const ClassifierSpec& classifier;
  std::uint64_t run_seed = 0;
  std::size_t step = 1;
};

struct ActionScore {
  std::size_t feature = 0;
  double r_m = 0.0;
  double r_e = 0.0;
  double r = 0.0;
  std::size_t exploration_n = 0;
  std::size_t rows = 0;
  std::size_t covering = 0;
};

struct StageRecord {
  std::size_t stage = 0;  // 1-based
  FeatureSet chosen_before;
  FeatureSet available;
  std::vector<ActionScore> scores;  // ascending feature order
  std::size_t argmax = 0;
  std::size_t action = 0;
  bool explored = false;  // action came from the epsilon branch
};

struct Selection {
  FeatureSet features;
  std::vector<std::size_t> order;  // features in the order they were added
  std::vector<StageRecord> stages;
};

/// Seed for the reward evaluation of `action` at (step, stage).
inline std::uint64_t reward_seed(std::uint64_t run_seed, std::size_t step, std::size_t stage, std::size_t action) {
  return derive_seed(run_seed, 0x7265776172ULL, step, stage, action);
}

struct MlReward {
  double r_m = 0.0;
  std::size_t rows = 0;
  std::size_t covering = 0;
};

/// Performance of the candidate subset chosen ∪ {action}: f1 on a held-out
/// 20% of the rows gathered for it. No data (or too little to split) scores 0.
inline MlReward reward_ml(const RewardContext& ctx, const FeatureSet& chosen, std::size_t action, std::size_t stage) {
  const FeatureSet candidate = chosen.with(action);
  const auto view = ctx.store.extract_subset(candidate);
  MlReward out{0.0, view.rows(), view.covering_count};
  if (view.rows() < kMinRewardRows) return out;

  const auto seed = reward_seed(ctx.run_seed, ctx.step, stage, action);
  const auto X = encode(view.X, candidate, ctx.schema);
  try {
    const auto split = split_train_test(X, view.y, kTrainRatio, derive_seed(seed, 1));
    const auto model = train(ctx.classifier.with_seed(derive_seed(seed, 2)), split.train_X, split.train_y);
    out.r_m = f1(split.test_y, predict(model, split.test_X)).f1;
  } catch (const TooFewRows&) {
    out.r_m = 0.0;
  }
  return out;
}

/// One step of sequential epsilon-greedy feature selection. Each stage scores
/// every remaining feature by r_m + r_e, then takes the argmax (lowest index
/// on ties) with probability 1 - epsilon or a uniformly random remaining
/// feature otherwise.
inline Selection select_features(const RewardContext& ctx, const PolicyParams& params, Rng& rng) {
  const std::size_t d = ctx.schema.d();
  params.validate(d);
  Selection sel;
  for (std::size_t j = 1; j <= params.k; ++j) {
    StageRecord st;
    st.stage = j;
    st.chosen_before = sel.features;
    st.available = sel.features.complement(d);

    double best = -std::numeric_limits<double>::infinity();
    for (auto a : st.available) {
      ActionScore s;
      s.feature = a;
      const auto ml = reward_ml(ctx, sel.features, a, j);
      s.r_m = ml.r_m;
      s.rows = ml.rows;
      s.covering = ml.covering;
      s.exploration_n = ctx.store.exploration_count(a);
      s.r_e = exploration_bonus(ctx.step, s.exploration_n, params.c);
      s.r = s.r_m + s.r_e;
      if (s.r > best) {
        best = s.r;
        st.argmax = a;
      }
      st.scores.push_back(s);
    }

    const double u = uniform01(rng);
    if (u < params.epsilon) {
      st.action = st.available[uniform_index(rng, st.available.size())];
      st.explored = true;
    } else {
      st.action = st.argmax;
    }
    sel.features.insert(st.action);
    sel.order.push_back(st.action);
    sel.stages.push_back(std::move(st));
  }
  return sel;
}

// Terminal subset -------------------------------------------------------------

struct CandidateScore {
  FeatureSet features;
  std::size_t rows = 0;
  CvReport cv;
  double weighted = 0.0;  // cv f1 * rows
};

struct BestSubset {
  FeatureSet features;
  std::size_t rows = 0;
  CvReport cv;
  std::vector<CandidateScore> candidates;
};

inline CandidateScore score_candidate(const AcquiredStore& store, const FeatureSchema& schema,
                                      const ClassifierSpec& spec, const FeatureSet& s, std::size_t folds,
                                      std::uint64_t seed) {
  const auto view = store.extract_subset(s);
  CandidateScore c;
  c.features = s;
  c.rows = view.rows();
  c.cv = cross_validate(spec, encode(view.X, s, schema), view.y, folds, seed);
  c.weighted = c.cv.f1 * static_cast<double>(c.rows);
  return c;
}

/// Picks, among the distinct delivered decision sets, the one maximising
/// cross-validated f1 weighted by the rows available for it. Ties prefer more
/// rows, then the lexicographically smallest set.
inline BestSubset best_subset(const AcquiredStore& store, const FeatureSchema& schema, const ClassifierSpec& spec,
                              std::size_t folds, std::uint64_t seed) {
  const auto sets = store.distinct_delivered_sets();
  if (sets.empty()) throw Error("best_subset: no delivered data");
  BestSubset best;
  std::size_t winner = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    best.candidates.push_back(score_candidate(store, schema, spec, sets[i], folds, seed));
    const auto& c = best.candidates.back();
    const auto& w = best.candidates[winner];
    if (i > 0 && (c.weighted > w.weighted || (c.weighted == w.weighted && c.rows > w.rows))) winner = i;
  }
  const auto& w = best.candidates[winner];
  best.features = w.features;
  best.rows = w.rows;
  best.cv = w.cv;
  return best;
}

// Baseline decision rules ------------------------------------------------------------

/// Uniform k-subset of {0..d-1}, drawn sequentially without replacement.
inline FeatureSet random_policy(Rng& rng, std::size_t k, std::size_t d) {
  if (k < 1 || k > d) throw Error("random_policy: k must lie in [1, d]");
  std::vector<std::size_t> pool(d);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, d - i)]);
  pool.resize(k);
  return FeatureSet(std::move(pool));
}

struct ImportanceRanking {
  FeatureSet top;
  std::vector<double> importance;  // per raw feature; indicator columns summed to their parent
  double total = 0.0;              // total impurity decrease of the fitted model
};

/// Fits the ensemble on every feature of `data` and keeps the k raw features
/// with the largest Gini importance (lower index wins ties).
inline ImportanceRanking importance_topk(const Dataset& data, std::size_t k, const ClassifierSpec& spec) {
  if (data.size() == 0) throw Error("importance_topk: empty data");
  const std::size_t d = data.d();
  if (k < 1 || k > d) throw Error("importance_topk: k must lie in [1, d]");
  const auto all = FeatureSet::all(d);
  const auto X = encode(data.table, all, data.schema);
  const auto model = train(spec, X, data.labels);

  ImportanceRanking out;
  out.importance.assign(d, 0.0);
  const auto owner = encoded_column_owners(all, data.schema);
  for (std::size_t c = 0; c < owner.size(); ++c) out.importance[owner[c]] += model.importance[c];
  out.total = model.total_impurity_decrease;

  std::vector<std::size_t> order(d);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return out.importance[a] > out.importance[b]; });
  order.resize(k);
  out.top = FeatureSet(std::move(order));
  return out;
}

}  // namespace fbfs
