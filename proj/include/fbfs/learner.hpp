#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"

namespace fbfs {

class TooFewRows : public Error {
 public:
  using Error::Error;
};

/// Bagged Gini trees. `features_per_split` of 0 means floor(sqrt(width)).
struct ClassifierSpec {
  std::size_t trees = 50;
  std::size_t max_depth = 8;
  std::size_t min_samples_leaf = 2;
  std::size_t features_per_split = 0;
  std::size_t max_bins = 256;  // numeric columns with more distinct values are quantile-binned
  std::uint64_t seed = 0;

  void validate() const {
    if (trees < 1) throw ConfigError("classifier: tree count must be >= 1");
    if (max_depth < 1) throw ConfigError("classifier: max depth must be >= 1");
    if (min_samples_leaf < 1) throw ConfigError("classifier: min samples per leaf must be >= 1");
    if (max_bins < 2 || max_bins > 65535) throw ConfigError("classifier: max bins must lie in [2, 65535]");
  }

  ClassifierSpec with_seed(std::uint64_t s) const {
    ClassifierSpec c = *this;
    c.seed = s;
    return c;
  }

  std::size_t split_candidates(std::size_t width) const {
    if (features_per_split > 0) return std::min(features_per_split, width);
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(width))));
  }
};

struct TreeNode {
  std::int32_t feature = -1;  // -1 marks a leaf
  double threshold = 0.0;     // go left when x <= threshold
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint8_t label = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;

  static DecisionTree leaf(std::uint8_t label) { return DecisionTree{{TreeNode{-1, 0.0, 0, 0, label}}}; }

  std::uint8_t predict(std::span<const double> row) const {
    std::uint32_t i = 0;
    while (nodes[i].feature >= 0) {
      const auto& n = nodes[i];
      i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[i].label;
  }
};

struct TrainedModel {
  EncodingSignature signature;
  std::vector<DecisionTree> trees;
  /// Mean over trees of the sample-weighted Gini decrease credited to each encoded column.
  std::vector<double> importance;
  /// Same quantity summed over all splits; equals the sum of `importance`.
  double total_impurity_decrease = 0.0;

  bool is_constant() const { return trees.size() == 1 && trees[0].nodes.size() == 1; }
};

namespace detail {

/// Per-column discretisation shared by every tree of one forest.
struct BinnedColumn {
  std::vector<std::uint16_t> codes;
  std::vector<double> lower;  // smallest training value in each bin
  std::vector<double> upper;  // largest training value in each bin

  std::size_t bins() const { return upper.size(); }

  double threshold_after(std::size_t b) const {
    const double lo = upper[b], hi = lower[b + 1];
    const double mid = lo + (hi - lo) / 2.0;
    return mid < hi ? mid : lo;
  }
};

inline BinnedColumn bin_column(const Matrix& X, std::size_t col, std::size_t max_bins) {
  const std::size_t n = X.rows;
  std::vector<double> sorted(n);
  for (std::size_t r = 0; r < n; ++r) sorted[r] = X(r, col);
  std::sort(sorted.begin(), sorted.end());

  std::vector<double> uppers;
  std::vector<double> uniq;
  std::unique_copy(sorted.begin(), sorted.end(), std::back_inserter(uniq));
  if (uniq.size() <= max_bins) {
    uppers = std::move(uniq);
  } else {
    for (std::size_t b = 1; b < max_bins; ++b) {
      const double cut = sorted[b * n / max_bins];
      if (uppers.empty() || cut > uppers.back()) uppers.push_back(cut);
    }
    if (uppers.back() < sorted.back()) uppers.push_back(sorted.back());
  }

  BinnedColumn bc;
  bc.upper = uppers;
  bc.lower.assign(uppers.size(), std::numeric_limits<double>::infinity());
  bc.codes.resize(n);
  for (std::size_t r = 0; r < n; ++r) {
    const double v = X(r, col);
    const auto b = static_cast<std::size_t>(std::lower_bound(uppers.begin(), uppers.end(), v) - uppers.begin());
    bc.codes[r] = static_cast<std::uint16_t>(b);
    bc.lower[b] = std::min(bc.lower[b], v);
  }
  return bc;
}

// Gini impurity scaled by sample count: m * (1 - p^2 - q^2).
inline double weighted_gini(double m, double pos) {
  if (m <= 0.0) return 0.0;
  const double neg = m - pos;
  return m - (pos * pos + neg * neg) / m;
}

class TreeBuilder {
 public:
  TreeBuilder(const std::vector<BinnedColumn>& cols, const Labels& y, const ClassifierSpec& spec,
              std::vector<double>& importance, double& total)
      : cols_(cols), y_(y), spec_(spec), importance_(importance), total_(total), feature_pool_(cols.size()) {
    std::iota(feature_pool_.begin(), feature_pool_.end(), std::size_t{0});
    std::size_t max_bins = 0;
    for (const auto& c : cols_) max_bins = std::max(max_bins, c.bins());
    hist_n_.resize(max_bins);
    hist_p_.resize(max_bins);
  }

  DecisionTree build(std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = y_.size();
    idx_.resize(n);
    for (auto& i : idx_) i = uniform_index(rng, n);
    tree_ = DecisionTree{};
    root_n_ = static_cast<double>(n);
    grow(0, n, 0, rng);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::size_t begin, std::size_t end, std::size_t depth, Rng& rng) {
    const auto node = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    const std::size_t n = end - begin;
    std::size_t pos = 0;
    for (std::size_t i = begin; i < end; ++i) pos += y_[idx_[i]];
    tree_.nodes[node].label = 2 * pos > n ? 1 : 0;

    if (pos == 0 || pos == n || depth >= spec_.max_depth || n < 2 * spec_.min_samples_leaf) return node;

    const double parent = weighted_gini(static_cast<double>(n), static_cast<double>(pos));
    const std::size_t mtry = spec_.split_candidates(cols_.size());
    double best_gain = 1e-12;
    std::size_t best_feature = 0, best_bin = 0;
    bool found = false;

    for (std::size_t k = 0; k < mtry; ++k) {
      std::swap(feature_pool_[k], feature_pool_[k + uniform_index(rng, feature_pool_.size() - k)]);
      const std::size_t f = feature_pool_[k];
      const auto& col = cols_[f];
      const std::size_t nb = col.bins();
      if (nb < 2) continue;
      std::fill_n(hist_n_.begin(), nb, 0);
      std::fill_n(hist_p_.begin(), nb, 0);
      for (std::size_t i = begin; i < end; ++i) {
        const auto r = idx_[i];
        ++hist_n_[col.codes[r]];
        hist_p_[col.codes[r]] += y_[r];
      }
      std::size_t ln = 0, lp = 0;
      for (std::size_t b = 0; b + 1 < nb; ++b) {
        ln += hist_n_[b];
        lp += hist_p_[b];
        if (hist_n_[b] == 0 && b > 0) continue;
        if (ln < spec_.min_samples_leaf) continue;
        const std::size_t rn = n - ln;
        if (rn < spec_.min_samples_leaf) break;
        const double gain = parent - weighted_gini(static_cast<double>(ln), static_cast<double>(lp)) -
                            weighted_gini(static_cast<double>(rn), static_cast<double>(pos - lp));
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_bin = b;
          found = true;
        }
      }
    }
    if (!found) return node;

    const auto& col = cols_[best_feature];
    auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(begin),
                              idx_.begin() + static_cast<std::ptrdiff_t>(end),
                              [&](std::size_t r) { return col.codes[r] <= best_bin; });
    const auto split = static_cast<std::size_t>(mid - idx_.begin());

    importance_[best_feature] += best_gain / root_n_;
    total_ += best_gain / root_n_;

    const auto left = grow(begin, split, depth + 1, rng);
    const auto right = grow(split, end, depth + 1, rng);
    auto& nd = tree_.nodes[node];
    nd.feature = static_cast<std::int32_t>(best_feature);
    nd.threshold = col.threshold_after(best_bin);
    nd.left = left;
    nd.right = right;
    return node;
  }

  const std::vector<BinnedColumn>& cols_;
  const Labels& y_;
  const ClassifierSpec& spec_;
  std::vector<double>& importance_;
  double& total_;
  std::vector<std::size_t> feature_pool_;
  std::vector<std::size_t> idx_;
  std::vector<std::size_t> hist_n_, hist_p_;
  DecisionTree tree_;
  double root_n_ = 1.0;
};

}  // namespace detail

/// Fits the ensemble. A single-class target yields a constant model.
inline TrainedModel train(const ClassifierSpec& spec, const EncodedMatrix& X, const Labels& y) {
  spec.validate();
  if (X.values.rows != y.size()) throw Error("train: row count does not match label count");
  if (y.size() < 2) throw TooFewRows("train: need at least 2 rows");
  if (X.values.cols < 1) throw Error("train: need at least 1 column");
  if (X.values.cols != X.signature.width) throw Error("train: matrix width does not match its signature");

  TrainedModel model;
  model.signature = X.signature;
  model.importance.assign(X.values.cols, 0.0);

  const std::size_t pos = static_cast<std::size_t>(std::count(y.begin(), y.end(), std::uint8_t{1}));
  if (pos == 0 || pos == y.size()) {
    model.trees.push_back(DecisionTree::leaf(pos == 0 ? 0 : 1));
    return model;
  }

  std::vector<detail::BinnedColumn> cols;
  cols.reserve(X.values.cols);
  for (std::size_t c = 0; c < X.values.cols; ++c) cols.push_back(detail::bin_column(X.values, c, spec.max_bins));

  detail::TreeBuilder builder(cols, y, spec, model.importance, model.total_impurity_decrease);
  model.trees.reserve(spec.trees);
  for (std::size_t t = 0; t < spec.trees; ++t) model.trees.push_back(builder.build(derive_seed(spec.seed, t)));

  const double nt = static_cast<double>(spec.trees);
  for (auto& v : model.importance) v /= nt;
  model.total_impurity_decrease /= nt;
  return model;
}

/// Majority vote; an exact tie goes to the negative class.
inline Labels predict(const TrainedModel& model, const EncodedMatrix& X) {
  if (!(X.signature == model.signature)) throw Error("predict: encoding signature differs from training");
  Labels out(X.values.rows);
  for (std::size_t r = 0; r < X.values.rows; ++r) {
    const auto row = X.values.row(r);
    std::size_t votes = 0;
    for (const auto& t : model.trees) votes += t.predict(row);
    out[r] = 2 * votes > model.trees.size() ? 1 : 0;
  }
  return out;
}

// Metrics ---------------------------------------------------------------------

struct MetricReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline MetricReport f1(const Labels& y_true, const Labels& y_pred) {
  if (y_true.size() != y_pred.size()) throw Error("f1: length mismatch");
  if (y_true.empty()) throw Error("f1: empty input");
  MetricReport m;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    if (y_pred[i]) (y_true[i] ? m.tp : m.fp)++;
    else (y_true[i] ? m.fn : m.tn)++;
  }
  m.precision = m.tp + m.fp ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp) : 0.0;
  m.recall = m.tp + m.fn ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

// Splitting -------------------------------------------------------------------

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Stratified when both classes are present: each class sends round(m_c * ratio)
/// rows to training. Index lists come back in ascending order.
inline SplitIndices split_indices(const Labels& y, double ratio, std::uint64_t seed) {
  if (y.size() < 5) throw TooFewRows("split: need at least 5 rows, have " + std::to_string(y.size()));
  Rng rng(seed);
  SplitIndices s;
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < y.size(); ++i) by_class[y[i] ? 1 : 0].push_back(i);
  auto take = [&](std::vector<std::size_t>& rows) {
    shuffle(rows, rng);
    const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(rows.size()) * ratio));
    s.train.insert(s.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  };
  if (by_class[0].empty() || by_class[1].empty()) {
    std::vector<std::size_t> all(y.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(all);
  } else {
    take(by_class[0]);
    take(by_class[1]);
  }
  if (s.test.empty()) {  // rounding pushed everything to training
    s.test.push_back(s.train.back());
    s.train.pop_back();
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

struct TrainTestSplit {
  EncodedMatrix train_X;
  Labels train_y;
  EncodedMatrix test_X;
  Labels test_y;
  SplitIndices indices;
};

inline TrainTestSplit split_train_test(const EncodedMatrix& X, const Labels& y, double ratio, std::uint64_t seed) {
  auto idx = split_indices(y, ratio, seed);
  TrainTestSplit s{{X.values.select_rows(idx.train), X.signature}, select(y, idx.train),
                   {X.values.select_rows(idx.test), X.signature}, select(y, idx.test), std::move(idx)};
  return s;
}

// Cross-validation --------------------------------------------------------------

struct CvReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  bool insufficient = false;          // too few rows; scores are 0
  std::vector<MetricReport> folds;
  std::vector<std::size_t> fold_of;   // fold assignment per row
  Labels predictions;                 // out-of-fold prediction per row
};

/// Stratified fold assignment: rows of each class are shuffled and dealt
/// round-robin, the second class continuing where the first stopped.
inline std::vector<std::size_t> stratified_folds(const Labels& y, std::size_t folds, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::size_t> fold_of(y.size());
  std::size_t next = 0;
  for (std::uint8_t cls : {std::uint8_t{0}, std::uint8_t{1}}) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == cls) rows.push_back(i);
    shuffle(rows, rng);
    for (auto r : rows) fold_of[r] = next++ % folds;
  }
  return fold_of;
}

inline CvReport cross_validate(const ClassifierSpec& spec, const EncodedMatrix& X, const Labels& y,
                               std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error("cross_validate: need at least 2 folds");
  CvReport rep;
  if (y.size() < folds || y.size() - (y.size() + folds - 1) / folds < 2) {
    rep.insufficient = true;
    return rep;
  }
  rep.fold_of = stratified_folds(y, folds, seed);
  rep.predictions.assign(y.size(), 0);
  for (std::size_t k = 0; k < folds; ++k) {
    std::vector<std::size_t> tr, te;
    for (std::size_t i = 0; i < y.size(); ++i) (rep.fold_of[i] == k ? te : tr).push_back(i);
    const EncodedMatrix train_X{X.values.select_rows(tr), X.signature};
    const EncodedMatrix test_X{X.values.select_rows(te), X.signature};
    const auto model = train(spec.with_seed(derive_seed(seed, 0x5eedULL, k)), train_X, select(y, tr));
    const auto pred = predict(model, test_X);
    for (std::size_t i = 0; i < te.size(); ++i) rep.predictions[te[i]] = pred[i];
    rep.folds.push_back(f1(select(y, te), pred));
  }
  for (const auto& m : rep.folds) {
    rep.f1 += m.f1;
    rep.precision += m.precision;
    rep.recall += m.recall;
  }
  const double k = static_cast<double>(folds);
  rep.f1 /= k;
  rep.precision /= k;
  rep.recall /= k;
  return rep;
}

}  // namespace fbfs
