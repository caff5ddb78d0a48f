#include <gtest/gtest.h>

#include <map>

#include "selfheal/simkernel.hpp"

using namespace selfheal;

namespace {

SimConfig small_config(std::size_t n = 60, Epoch T = 200) {
  SimConfig c;
  c.n_nodes = n;
  c.epochs_T = T;
  c.bootstrap_epochs = T / 8;
  c.seed = 99;
  c.threshold_t = 10;
  return c;
}

}  // namespace

TEST(SimConfig, Validation) {
  auto c = small_config();
  EXPECT_NO_THROW(validate(c));
  c.bootstrap_epochs = c.epochs_T;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = small_config();
  c.threshold_t = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(FaultPlan, ProfileExamples) {
  const auto p3 = build_fault_plan({FaultProfile::P3, 0.2, 3200}, 3000, 1);
  EXPECT_EQ(p3.m, 4u);
  EXPECT_EQ(p3.k, 150u);
  EXPECT_EQ(p3.batch_epochs, (std::vector<Epoch>{1060, 1620, 2180, 2740}));
  EXPECT_NO_THROW(validate(p3));

  const auto p1 = build_fault_plan({FaultProfile::P1, 0.5, 3200}, 3000, 1);
  EXPECT_EQ(p1.m, 1u);
  EXPECT_EQ(p1.k, 1500u);
  EXPECT_EQ(p1.batch_epochs, (std::vector<Epoch>{1600}));

  EXPECT_THROW(build_fault_plan({FaultProfile::P2, 0.1, 3200}, 10, 1), std::invalid_argument);
  EXPECT_THROW(build_fault_plan({FaultProfile::P1, 1.5, 3200}, 10, 1), std::invalid_argument);
  EXPECT_THROW(build_fault_plan({FaultProfile::P3, 0.5, 3200}, 300, 1), std::invalid_argument);
}

TEST(FaultPlan, RescalesBatchEpochs) {
  EXPECT_EQ((FaultProfileSpec{FaultProfile::P1, 0.5, 800}.batch_epochs()), (std::vector<Epoch>{400}));
  EXPECT_EQ((FaultProfileSpec{FaultProfile::P2, 0.5, 800}.batch_epochs()), (std::vector<Epoch>{333, 566}));
  EXPECT_EQ((FaultProfileSpec{FaultProfile::P3, 0.5, 800}.batch_epochs()), (std::vector<Epoch>{265, 405, 545, 685}));
  EXPECT_EQ(rescale_epoch(100, 800), 25);
}

TEST(FaultPlan, DisjointBatchesFromSeed) {
  const auto a = build_fault_plan({FaultProfile::P3, 0.4, 3200}, 200, 5);
  const auto b = build_fault_plan({FaultProfile::P3, 0.4, 3200}, 200, 5);
  EXPECT_EQ(a.faulty_node_ids, b.faulty_node_ids);
  EXPECT_NO_THROW(validate(a));
  auto bad = a;
  bad.faulty_node_ids[1][0] = bad.faulty_node_ids[0][0];
  EXPECT_THROW(validate(bad), std::invalid_argument);
}

TEST(SightingTracker, FiresAtLastPlusThresholdPlusOne) {
  SightingTracker tr(1, {150}, 400);
  tr.sight(0, 500);
  tr.finish(0, 3200);
  EXPECT_EQ(tr.detection(0, 0), Epoch{651});

  SightingTracker exact(1, {150}, 400);
  exact.sight(0, 500);
  exact.sight(0, 651);  // seen right at the deadline: staleness 151 never observed
  exact.finish(0, 800);
  EXPECT_FALSE(exact.detection(0, 0).has_value());

  SightingTracker late(1, {150}, 400);
  late.sight(0, 500);
  late.sight(0, 652);
  EXPECT_EQ(late.detection(0, 0), Epoch{651});
}

TEST(SightingTracker, HorizonStopsDetection) {
  SightingTracker tr(1, {10, 20}, 0);
  tr.sight(0, 5);
  tr.finish(0, 20);
  EXPECT_EQ(tr.detection(0, 0), Epoch{16});
  EXPECT_FALSE(tr.detection(1, 0).has_value());
}

// Property: on random sighting sequences, detection is monotone in the threshold.
TEST(SightingTracker, MonotoneInThreshold) {
  Rng g(8);
  const std::vector<Epoch> ts{1, 3, 5, 8, 13, 21};
  for (int trial = 0; trial < 2000; ++trial) {
    SightingTracker tr(1, ts, 0);
    Epoch now = 0;
    while (true) {
      now += 1 + static_cast<Epoch>(g.below(25));
      if (now > 200) break;
      tr.sight(0, now);
    }
    tr.finish(0, 200);
    for (std::size_t i = 1; i < ts.size(); ++i) {
      const auto lo = tr.detection(i - 1, 0), hi = tr.detection(i, 0);
      if (hi) {
        ASSERT_TRUE(lo.has_value());
        ASSERT_GE(*hi, *lo);
      }
    }
  }
}

TEST(Run, ReproducibleDigest) {
  auto cfg = small_config();
  cfg.pair_thresholds = {5, 10, 20};
  const auto plan = build_fault_plan({FaultProfile::P2, 0.2, cfg.epochs_T}, cfg.n_nodes, cfg.seed);
  const auto a = run(cfg, plan);
  const auto b = run(cfg, plan);
  EXPECT_EQ(a.digest(), b.digest());
  cfg.seed = 100;
  EXPECT_NE(run(cfg, plan).digest(), a.digest());
}

TEST(Run, HealthyLargeThresholdHasNoDetections) {
  auto cfg = small_config(50, 150);
  cfg.threshold_t = 140;
  const auto trace = run(cfg, healthy_plan(cfg.n_nodes));
  std::size_t detections = 0;
  trace.for_each_record(0, [&](NodeId, NodeId, const PairRecord& r) { detections += r.detection_d.has_value(); });
  EXPECT_EQ(detections, 0u);
}

TEST(Run, ClassCountsMatchFrequencies) {
  auto cfg = small_config(80, 200);
  for (auto prof : {FaultProfile::P1, FaultProfile::P2, FaultProfile::P3}) {
    const auto plan = build_fault_plan({prof, 0.5, cfg.epochs_T}, cfg.n_nodes, 3);
    const auto trace = run(cfg, plan);
    std::map<ScenarioClass, std::uint64_t> seen;
    trace.for_each_record(0, [&](NodeId, NodeId, const PairRecord& r) {
      ASSERT_NO_THROW(validate(r));
      ++seen[class_of(classify_scenario(r))];
    });
    const auto expect = scenario_frequencies(cfg.n_nodes, plan.m, plan.k);
    for (const auto& [cls, cnt] : expect) EXPECT_EQ(seen[cls], cnt) << class_name(cls);
  }
}

TEST(Run, DetectionsPrecedeMonitorFailure) {
  auto cfg = small_config(60, 300);
  cfg.pair_thresholds = {3, 6, 12};
  const auto plan = build_fault_plan({FaultProfile::P3, 0.4, cfg.epochs_T}, cfg.n_nodes, 11);
  const auto trace = run(cfg, plan);
  for (std::size_t ti = 0; ti < 3; ++ti) {
    trace.for_each_record(ti, [&](NodeId, NodeId, const PairRecord& r) { ASSERT_NO_THROW(validate(r)); });
  }
}

TEST(Run, CrashedNodeIsEventuallyDetectedByEveryone) {
  auto cfg = small_config(150, 400);
  cfg.bootstrap_epochs = 20;
  cfg.threshold_t = 40;
  FaultPlan plan = healthy_plan(cfg.n_nodes);
  plan.m = 1;
  plan.k = 1;
  plan.batch_epochs = {100};
  plan.faulty_node_ids = {{7}};
  const auto trace = run(cfg, plan);
  for (NodeId a = 0; a < cfg.n_nodes; ++a) {
    if (a == 7) continue;
    const auto r = trace.record(0, a, 7);
    EXPECT_EQ(classify_scenario(r), ScenarioId::S2);
    ASSERT_TRUE(r.detection_d.has_value()) << "monitor " << a;
  }
}

TEST(Run, HooksSeeEveryEpoch) {
  auto cfg = small_config(30, 50);
  std::vector<Epoch> seen;
  const EpochHook hooks[] = {[&](EpochContext& ctx) { seen.push_back(ctx.now); }};
  run(cfg, healthy_plan(cfg.n_nodes), hooks);
  ASSERT_EQ(seen.size(), 50u);
  EXPECT_EQ(seen.front(), 1);
  EXPECT_EQ(seen.back(), 50);
}
