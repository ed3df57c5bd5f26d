#pragma once

#include <functional>
#include <optional>

#include "simulator.hpp"
#include "store.hpp"

namespace fbfs {

struct AcquisitionRequest {
  FeatureSet features;
  std::size_t count = 0;
};

/// Called once per decision step with the store as visible at that step.
/// Returning nullopt leaves the step idle (wait-style schedules).
using ClockedPolicy = std::function<std::optional<AcquisitionRequest>(std::size_t step, const AcquiredStore&)>;

struct RunHistory {
  std::vector<DecisionRecord> decisions;
  std::vector<DataBatch> batches;
  std::size_t last_decision_step = 0;
  std::size_t final_step = 0;  // last step that was closed
};

struct RunHooks {
  std::function<void(const DecisionRecord&)> on_submit;
  std::function<void(const DataBatch&)> on_deliver;
};

/// Drives `policy` for steps 1..decision_steps, then keeps the clock running
/// until every in-flight decision has been delivered.
inline RunHistory run_clocked_policy(Simulator& sim, AcquiredStore& store, std::size_t decision_steps,
                                     const ClockedPolicy& policy, const RunHooks& hooks = {}) {
  RunHistory h;
  auto close_step = [&] {
    h.final_step = sim.clock();
    for (auto& b : sim.advance()) {
      if (hooks.on_deliver) hooks.on_deliver(b);
      store.deliver(std::move(b));
    }
  };
  for (std::size_t t = 1; t <= decision_steps; ++t) {
    if (sim.clock() != t) throw Error("run_clocked_policy: simulator clock out of sync");
    if (auto req = policy(t, store)) {
      auto rec = sim.submit(req->features, req->count);
      store.record(rec);
      if (hooks.on_submit) hooks.on_submit(rec);
      h.last_decision_step = t;
    }
    close_step();
  }
  while (!sim.idle()) close_step();
  h.decisions = store.decisions();
  h.batches = store.batches();
  return h;
}

/// Convenience form: a fresh simulator and store over `pool`.
inline RunHistory run_clocked_policy(std::shared_ptr<const Dataset> pool, std::size_t delay, std::uint64_t seed,
                                     std::size_t decision_steps, const ClockedPolicy& policy) {
  const std::size_t d = pool->d();
  Simulator sim(std::move(pool), delay, seed);
  AcquiredStore store(d);
  return run_clocked_policy(sim, store, decision_steps, policy);
}

}  // namespace fbfs
