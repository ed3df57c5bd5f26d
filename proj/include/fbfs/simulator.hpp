#pragma once

#include <deque>
#include <memory>
#include <optional>
#include <vector>

#include "common.hpp"
#include "dataset.hpp"

namespace fbfs {

enum class DeliveryStatus { in_flight, delivered };

struct DecisionRecord {
  std::size_t decision_id = 0;
  std::size_t step_submitted = 0;
  FeatureSet features;
  std::size_t instance_count = 0;
  DeliveryStatus status = DeliveryStatus::in_flight;
  std::optional<std::size_t> step_delivered;

  friend bool operator==(const DecisionRecord&, const DecisionRecord&) = default;
};

/// Rows delivered for one decision, restricted to that decision's features.
struct DataBatch {
  std::size_t decision_id = 0;
  std::size_t step_delivered = 0;
  RawTable X;
  Labels y;
  std::vector<std::size_t> pool_rows;  // rows of the acquisition pool this batch came from

  friend bool operator==(const DataBatch&, const DataBatch&) = default;
};

/// Delayed acquisition channel over a fixed pool.
///
/// Steps are numbered from 1. A decision submitted during step t is delivered
/// at the end of step t + D: `advance()` closes the current step, returning the
/// batches due at that step, and moves the clock on. A policy running at step
/// t therefore sees exactly the decisions submitted at or before t - D - 1.
///
/// Pool rows are drawn without replacement from a seeded permutation and are
/// reserved when the decision is submitted.
class Simulator {
 public:
  Simulator(std::shared_ptr<const Dataset> pool, std::size_t delay, std::uint64_t seed)
      : pool_(std::move(pool)), delay_(delay), order_(pool_->size()) {
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
    Rng rng(seed);
    shuffle(order_, rng);
  }

  std::size_t clock() const noexcept { return clock_; }
  std::size_t delay() const noexcept { return delay_; }
  std::size_t remaining() const noexcept { return order_.size() - consumed_; }
  std::size_t consumed() const noexcept { return consumed_; }
  bool idle() const noexcept { return in_flight_.empty(); }
  const Dataset& pool() const noexcept { return *pool_; }

  DecisionRecord submit(const FeatureSet& features, std::size_t count) {
    if (features.empty()) throw Error("submit: empty feature set");
    if (features.max_index() >= pool_->d()) throw Error("submit: feature index outside schema");
    if (count == 0) throw Error("submit: instance count must be positive");
    if (count > remaining()) throw BudgetExceeded(clock_, count, remaining());

    DecisionRecord rec{next_id_++, clock_, features, count, DeliveryStatus::in_flight, std::nullopt};
    Pending p{rec, {order_.begin() + static_cast<std::ptrdiff_t>(consumed_),
                    order_.begin() + static_cast<std::ptrdiff_t>(consumed_ + count)}};
    consumed_ += count;
    in_flight_.push_back(std::move(p));
    return rec;
  }

  /// Ends the current step. Returns the batches due now, in decision_id order.
  std::vector<DataBatch> advance() {
    std::vector<DataBatch> out;
    while (!in_flight_.empty() && in_flight_.front().record.step_submitted + delay_ == clock_) {
      auto& p = in_flight_.front();
      DataBatch b;
      b.decision_id = p.record.decision_id;
      b.step_delivered = clock_;
      b.X = pool_->table.select_rows(p.rows).project(p.record.features);
      b.y = select(pool_->labels, p.rows);
      b.pool_rows = std::move(p.rows);
      out.push_back(std::move(b));
      in_flight_.pop_front();
    }
    ++clock_;
    return out;
  }

 private:
  struct Pending {
    DecisionRecord record;
    std::vector<std::size_t> rows;
  };

  std::shared_ptr<const Dataset> pool_;
  std::size_t delay_;
  std::vector<std::size_t> order_;
  std::size_t consumed_ = 0;
  std::size_t clock_ = 1;
  std::size_t next_id_ = 0;
  std::deque<Pending> in_flight_;  // FIFO: constant delay keeps it sorted by due step
};

}  // namespace fbfs
