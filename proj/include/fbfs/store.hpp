#pragma once

#include <ostream>
#include <set>
#include <vector>

#include <nlohmann/json.hpp>

#include "common.hpp"
#include "simulator.hpp"

namespace fbfs {

/// Rows gathered for a candidate subset from every delivered batch whose
/// decision covers it.
struct SubsetView {
  FeatureSet features;
  RawTable X;  // columns == features
  Labels y;
  std::size_t covering_count = 0;
  std::vector<std::size_t> decision_ids;  // covering decisions, ascending
  std::vector<std::size_t> pool_rows;     // provenance of each row

  std::size_t rows() const noexcept { return y.size(); }
  bool empty() const noexcept { return y.empty(); }
};

/// Every decision made so far (in flight or delivered) and every delivered batch.
class AcquiredStore {
 public:
  explicit AcquiredStore(std::size_t d) : feature_counts_(d, 0) {}

  std::size_t d() const noexcept { return feature_counts_.size(); }

  void record(const DecisionRecord& rec) {
    if (rec.decision_id != decisions_.size()) throw Error("store: decisions must be recorded in id order");
    if (rec.features.max_index() >= d()) throw Error("store: decision references unknown feature");
    decisions_.push_back(rec);
    for (auto f : rec.features) feature_counts_[f] += rec.instance_count;
  }

  void deliver(DataBatch batch) {
    if (batch.decision_id >= decisions_.size()) throw Error("store: batch for unknown decision");
    auto& rec = decisions_[batch.decision_id];
    if (rec.status == DeliveryStatus::delivered) throw Error("store: decision delivered twice");
    if (batch.y.size() != rec.instance_count || batch.X.columns != rec.features)
      throw Error("store: batch does not match its decision");
    if (!batches_.empty() && batches_.back().decision_id > batch.decision_id)
      throw Error("store: batches must arrive in decision order");
    rec.status = DeliveryStatus::delivered;
    rec.step_delivered = batch.step_delivered;
    delivered_rows_ += batch.y.size();
    batches_.push_back(std::move(batch));
  }

  const std::vector<DecisionRecord>& decisions() const noexcept { return decisions_; }
  const std::vector<DataBatch>& batches() const noexcept { return batches_; }
  std::size_t delivered_rows() const noexcept { return delivered_rows_; }

  std::size_t submitted_rows() const {
    std::size_t n = 0;
    for (const auto& r : decisions_) n += r.instance_count;
    return n;
  }

  SubsetView extract_subset(const FeatureSet& s) const {
    if (s.empty()) throw Error("extract_subset: empty feature set");
    SubsetView v;
    v.features = s;
    v.X.columns = s;
    for (const auto& b : batches_) {
      if (!s.is_subset_of(b.X.columns)) continue;
      std::vector<std::size_t> pos;
      pos.reserve(s.size());
      for (auto f : s) pos.push_back(*b.X.columns.position_of(f));
      for (std::size_t r = 0; r < b.X.rows; ++r)
        for (auto p : pos) v.X.values.push_back(b.X.at(r, p));
      v.X.rows += b.X.rows;
      v.y.insert(v.y.end(), b.y.begin(), b.y.end());
      v.pool_rows.insert(v.pool_rows.end(), b.pool_rows.begin(), b.pool_rows.end());
      v.decision_ids.push_back(b.decision_id);
      ++v.covering_count;
    }
    return v;
  }

  /// Instances carrying `feature`, counting both delivered and in-flight decisions.
  std::size_t exploration_count(std::size_t feature) const { return feature_counts_.at(feature); }

  /// Distinct feature sets among delivered decisions, ascending.
  std::vector<FeatureSet> distinct_delivered_sets() const {
    std::set<FeatureSet> out;
    for (const auto& b : batches_) out.insert(b.X.columns);
    return {out.begin(), out.end()};
  }

 private:
  std::vector<DecisionRecord> decisions_;
  std::vector<DataBatch> batches_;
  std::vector<std::size_t> feature_counts_;
  std::size_t delivered_rows_ = 0;
};

// Run-artifact log -------------------------------------------------------------
//
// One JSON object per line; numbers use shortest round-trip formatting so the
// log replays bit-exactly.

inline nlohmann::json to_json(const DecisionRecord& r) {
  nlohmann::json j{{"event", "submit"},
                   {"decision", r.decision_id},
                   {"step", r.step_submitted},
                   {"features", r.features.indices()},
                   {"count", r.instance_count}};
  return j;
}

inline nlohmann::json to_json(const DataBatch& b, bool with_rows) {
  nlohmann::json j{{"event", "deliver"},
                   {"decision", b.decision_id},
                   {"step", b.step_delivered},
                   {"rows", b.y.size()}};
  if (with_rows) {
    j["pool_rows"] = b.pool_rows;
    j["y"] = b.y;
  }
  return j;
}

/// Dumps the full decision/batch history.
inline void dump_history(std::ostream& out, const AcquiredStore& store, bool with_rows = true) {
  for (const auto& r : store.decisions()) out << to_json(r).dump() << '\n';
  for (const auto& b : store.batches()) out << to_json(b, with_rows).dump() << '\n';
}

}  // namespace fbfs
