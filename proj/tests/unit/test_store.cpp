#include <algorithm>
#include <sstream>

#include <gtest/gtest.h>

#include "fbfs/clocked_run.hpp"
#include "fbfs/store.hpp"
#include "oracles.hpp"

using namespace fbfs;

namespace {

std::shared_ptr<const Dataset> pool(std::size_t d = 6) {
  return std::make_shared<const Dataset>(synthesize({500, d, 0, 0, 0.0, 2}, 3));
}

}  // namespace

TEST(ExtractSubset, HandExample) {
  Simulator sim(pool(), 0, 1);
  AcquiredStore store(6);
  store.record(sim.submit(FeatureSet{1, 2, 3}, 10));
  for (auto& b : sim.advance()) store.deliver(std::move(b));
  store.record(sim.submit(FeatureSet{2, 4}, 10));
  for (auto& b : sim.advance()) store.deliver(std::move(b));

  auto v = store.extract_subset(FeatureSet{1, 2});
  EXPECT_EQ(v.rows(), 10u);
  EXPECT_EQ(v.covering_count, 1u);
  EXPECT_EQ(v.X.columns, (FeatureSet{1, 2}));
  EXPECT_EQ(v.X.values.size(), 20u);

  auto w = store.extract_subset(FeatureSet{2});
  EXPECT_EQ(w.rows(), 20u);
  EXPECT_EQ(w.covering_count, 2u);
  EXPECT_EQ(w.decision_ids, (std::vector<std::size_t>{0, 1}));

  auto none = store.extract_subset(FeatureSet{0});
  EXPECT_TRUE(none.empty());
  EXPECT_EQ(none.covering_count, 0u);
  EXPECT_THROW(store.extract_subset(FeatureSet{}), Error);
}

TEST(ExtractSubset, MatchesBruteForceOnRandomHistories) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto h = oracle::random_history(seed);
    const std::size_t d = h.store.d();
    Rng rng(seed + 1000);
    for (int q = 0; q < 5; ++q) {
      std::vector<std::size_t> f;
      const std::size_t k = 1 + uniform_index(rng, d);
      for (std::size_t i = 0; i < k; ++i) f.push_back(uniform_index(rng, d));
      const FeatureSet s(f);
      const auto view = h.store.extract_subset(s);
      const auto expected = oracle::subset_rows(h.store, *h.pool, s.indices());
      ASSERT_EQ(oracle::view_rows(view), expected) << "seed " << seed << " subset " << s.to_string();
    }
  }
}

TEST(ExtractSubset, MonotoneInSubsetAndTime) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    auto h = oracle::random_history(seed, 6, 30);
    const std::size_t d = h.store.d();
    Rng rng(seed);
    const auto small = FeatureSet{uniform_index(rng, d)};
    const auto big = small.with(uniform_index(rng, d));
    const auto vs = h.store.extract_subset(small);
    const auto vb = h.store.extract_subset(big);
    EXPECT_TRUE(std::includes(vs.decision_ids.begin(), vs.decision_ids.end(), vb.decision_ids.begin(),
                              vb.decision_ids.end()));
    EXPECT_GE(vs.rows(), vb.rows());
  }

  auto p = pool();
  Simulator sim(p, 2, 5);
  AcquiredStore store(6);
  std::size_t last = 0;
  for (int t = 0; t < 30; ++t) {
    store.record(sim.submit(FeatureSet{static_cast<std::size_t>(t % 3), 4}, 3));
    for (auto& b : sim.advance()) store.deliver(std::move(b));
    const auto rows = store.extract_subset(FeatureSet{4}).rows();
    EXPECT_GE(rows, last);
    last = rows;
  }
}

TEST(ExplorationCount, CountsInFlightAndDelivered) {
  Simulator sim(pool(), 5, 1);
  AcquiredStore store(6);
  EXPECT_EQ(store.exploration_count(2), 0u);
  // S_2 = {2,3} delivered, S_1 = {1,2} still in flight: simulate by submitting
  // {2,3} first with enough steps for it to land before {1,2} is sent.
  store.record(sim.submit(FeatureSet{2, 3}, 10));
  for (int i = 0; i < 6; ++i)
    for (auto& b : sim.advance()) store.deliver(std::move(b));
  store.record(sim.submit(FeatureSet{1, 2}, 10));
  ASSERT_EQ(store.decisions()[0].status, DeliveryStatus::delivered);
  ASSERT_EQ(store.decisions()[1].status, DeliveryStatus::in_flight);
  EXPECT_EQ(store.exploration_count(2), 20u);
  EXPECT_EQ(store.exploration_count(1), 10u);
  EXPECT_EQ(store.exploration_count(3), 10u);
  EXPECT_EQ(store.exploration_count(0), 0u);
  // In-flight rows do not show up in views.
  EXPECT_EQ(store.extract_subset(FeatureSet{1}).rows(), 0u);
}

TEST(ExplorationCount, SumsToKnTOverARun) {
  const std::size_t k = 3, n = 7, T = 40;
  Rng choice(8);
  auto p = pool(8);
  Simulator sim(std::make_shared<const Dataset>(synthesize({1000, 8, 0, 0, 0.0, 2}, 1)), 4, 2);
  AcquiredStore store(8);
  ClockedPolicy policy = [&](std::size_t, const AcquiredStore&) {
    FeatureSet s;
    while (s.size() < k) s.insert(uniform_index(choice, 8));
    return AcquisitionRequest{s, n};
  };
  run_clocked_policy(sim, store, T, policy);
  std::size_t total = 0;
  for (std::size_t f = 0; f < 8; ++f) {
    total += store.exploration_count(f);
    std::size_t delivered_with_f = 0;
    for (const auto& b : store.batches())
      if (b.X.columns.contains(f)) delivered_with_f += b.y.size();
    EXPECT_GE(store.exploration_count(f), delivered_with_f);
  }
  EXPECT_EQ(total, k * n * T);
}

TEST(Store, RejectsInconsistentBatches) {
  AcquiredStore store(4);
  DataBatch orphan;
  orphan.decision_id = 0;
  EXPECT_THROW(store.deliver(orphan), Error);
  store.record({0, 1, FeatureSet{0}, 2, DeliveryStatus::in_flight, std::nullopt});
  DataBatch wrong{0, 1, RawTable{FeatureSet{1}, 2, {0, 0}}, {0, 1}, {0, 1}};
  EXPECT_THROW(store.deliver(wrong), Error);
  EXPECT_THROW(store.record({5, 1, FeatureSet{0}, 2, DeliveryStatus::in_flight, std::nullopt}), Error);
}

TEST(Store, HistoryDumpIsLineDelimitedJson) {
  auto h = oracle::random_history(3, 5, 10);
  std::ostringstream out;
  dump_history(out, h.store);
  std::istringstream in(out.str());
  std::size_t submits = 0, delivers = 0;
  for (std::string line; std::getline(in, line);) {
    auto j = nlohmann::json::parse(line);
    submits += j["event"] == "submit";
    delivers += j["event"] == "deliver";
  }
  EXPECT_EQ(submits, h.store.decisions().size());
  EXPECT_EQ(delivers, h.store.batches().size());
}
