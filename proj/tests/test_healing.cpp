#include <gtest/gtest.h>

#include <set>

#include "selfheal/app.hpp"
#include "selfheal/healing.hpp"

using namespace selfheal;

TEST(Migrate, NeverPicksParentAndIsSeeded) {
  PartialView v(0, 5);
  v.mutable_entries() = {{1, 3}, {2, 3}, {3, 3}};
  std::set<NodeId> picks;
  for (std::uint64_t s = 0; s < 200; ++s) {
    SelfHealingAgent a;
    a.parent_id = 2;  // parent id can appear in a (stale) view entry; still excluded
    Rng r1(s), r2(s);
    ASSERT_TRUE(migrate(a, v, 10, r1));
    SelfHealingAgent b;
    b.parent_id = 2;
    migrate(b, v, 10, r2);
    EXPECT_EQ(a.host_id, b.host_id);
    EXPECT_NE(a.host_id, a.parent_id);
    EXPECT_EQ(a.migrated_at, 10);
    EXPECT_EQ(a.last_fresh_sighting, 10);
    picks.insert(a.host_id);
  }
  EXPECT_EQ(picks, (std::set<NodeId>{1, 3}));
}

TEST(Migrate, EmptyViewRetries) {
  SelfHealingAgent a;
  a.parent_id = 0;
  Rng r(1);
  EXPECT_FALSE(migrate(a, PartialView(0, 5), 3, r));
}

TEST(MonitorStep, StrictThreshold) {
  PartialView host(9, 5);
  SelfHealingAgent a;
  a.parent_id = 1;
  a.threshold_t = 150;
  a.migrated_at = 0;
  a.last_fresh_sighting = 0;
  EXPECT_EQ(monitor_step(a, host, 150), Decision::tolerate);  // staleness 150
  EXPECT_EQ(monitor_step(a, host, 151), Decision::correct);   // staleness 151
  EXPECT_EQ(a.state, AgentState::correcting);
  EXPECT_EQ(monitor_step(a, host, 152), Decision::tolerate);
}

TEST(MonitorStep, OnlyPostMigrationDescriptorsCount) {
  PartialView host(9, 5);
  host.mutable_entries() = {{1, 40}};
  SelfHealingAgent a;
  a.parent_id = 1;
  a.threshold_t = 5;
  a.migrated_at = 50;
  a.last_fresh_sighting = 50;
  for (Epoch now = 51; now <= 55; ++now) EXPECT_EQ(monitor_step(a, host, now), Decision::tolerate);
  EXPECT_EQ(monitor_step(a, host, 56), Decision::correct);
}

TEST(MonitorStep, ReturnAfterRecovery) {
  PartialView host(9, 5);
  SelfHealingAgent a;
  a.parent_id = 1;
  a.threshold_t = 2;
  EXPECT_EQ(monitor_step(a, host, 3), Decision::correct);
  a.departed_at = 1;
  host.mutable_entries() = {{1, 1}};
  EXPECT_EQ(monitor_step(a, host, 4), Decision::tolerate);
  host.mutable_entries() = {{1, 5}};
  EXPECT_EQ(monitor_step(a, host, 6), Decision::return_to_parent);
  EXPECT_EQ(a.state, AgentState::returned);
}

TEST(MonitorStep, NoReturnWithoutDeparture) {
  PartialView host(9, 5);
  SelfHealingAgent a;
  a.parent_id = 1;
  a.threshold_t = 2;
  EXPECT_EQ(monitor_step(a, host, 3), Decision::correct);
  host.mutable_entries() = {{1, 4}};
  EXPECT_EQ(monitor_step(a, host, 5), Decision::tolerate);
}

TEST(Rollback, PacedOnePerEpoch) {
  const std::vector<NodeId> consumers{4, 5, 6};
  SelfHealingAgent a;
  a.parent_id = 1;
  auto sched = correct(a, consumers);
  std::vector<NodeId> applied;
  int epochs = 0;
  while (!sched.done()) {
    sched.step([](NodeId) { return true; }, [&](NodeId c) { applied.push_back(c); });
    ++epochs;
  }
  EXPECT_EQ(epochs, 3);
  EXPECT_EQ(applied, consumers);
}

TEST(Rollback, EmptyCompletesAndFaultyIsSkipped) {
  SelfHealingAgent a;
  EXPECT_TRUE(correct(a, {}).done());
  const std::vector<NodeId> consumers{4, 5, 6};
  auto sched = correct(a, consumers);
  while (!sched.done()) sched.step([](NodeId c) { return c != 5; }, [](NodeId) {});
  EXPECT_EQ(std::vector<NodeId>(sched.issued().begin(), sched.issued().end()), (std::vector<NodeId>{4, 6}));
  EXPECT_EQ(std::vector<NodeId>(sched.skipped().begin(), sched.skipped().end()), (std::vector<NodeId>{5}));
}

TEST(Rollback, InterruptLeavesRemaining) {
  SelfHealingAgent a;
  const std::vector<NodeId> consumers{4, 5, 6};
  auto sched = correct(a, consumers);
  sched.step([](NodeId) { return true; }, [](NodeId) {});
  EXPECT_EQ(sched.remaining(), 2u);
  sched.interrupt();
  EXPECT_TRUE(sched.done());
  EXPECT_EQ(sched.issued().size(), 1u);
}

namespace {

SimConfig agent_config() {
  SimConfig c;
  c.n_nodes = 120;
  c.epochs_T = 400;
  c.bootstrap_epochs = 50;
  c.seed = 21;
  c.threshold_t = 12;
  return c;
}

}  // namespace

// The agent's detection equals the kernel's d for the (host, parent) pair while the agent stays on its first host.
TEST(Agents, AgreeWithKernelDetector) {
  auto sim = agent_config();
  sim.monitoring_mode = MonitoringMode::all_pairs;
  const auto plan = build_fault_plan({FaultProfile::P2, 0.5, sim.epochs_T}, sim.n_nodes, 4);
  AppConfig app;
  app.threshold_t = sim.threshold_t;
  const auto data = generate_synthetic(sim.n_nodes, 1);
  AggregationApp a(sim, app, data);
  const EpochHook hooks[] = {a.hook()};
  const auto trace = run(sim, plan, hooks);
  std::size_t compared = 0;
  for (const auto& slot : a.agents()) {
    if (!slot.placed || slot.migrations != 1) continue;
    const auto r = trace.record(0, slot.agent.host_id, slot.agent.parent_id);
    EXPECT_EQ(slot.detection, r.detection_d) << "parent " << slot.agent.parent_id;
    ++compared;
  }
  EXPECT_GT(compared, 50u);
}

TEST(Agents, NoReturnWithoutRecoveries) {
  auto sim = agent_config();
  const auto plan = build_fault_plan({FaultProfile::P1, 0.5, sim.epochs_T}, sim.n_nodes, 4);
  AppConfig app;
  app.threshold_t = 8;
  const auto out = run_application(sim, plan, app, generate_synthetic(sim.n_nodes, 1));
  for (const auto& e : out.trace.events) EXPECT_NE(e.kind, "return");
  for (const auto& r : out.agent_records) EXPECT_NO_THROW(validate(r));
}

TEST(Agents, ReturnAfterRecovery) {
  auto sim = agent_config();
  auto plan = build_fault_plan({FaultProfile::P1, 0.1, sim.epochs_T}, sim.n_nodes, 4);
  for (NodeId id : plan.faulty_node_ids[0]) plan.recoveries[id] = 300;
  AppConfig app;
  app.threshold_t = 10;
  const auto out = run_application(sim, plan, app, generate_synthetic(sim.n_nodes, 1));
  std::size_t returns = 0;
  for (const auto& e : out.trace.events) returns += e.kind == "return";
  EXPECT_GT(returns, 0u);
}

TEST(Agents, HostFailureTriggersMigrationOrDeath) {
  auto sim = agent_config();
  const auto plan = build_fault_plan({FaultProfile::P3, 0.4, sim.epochs_T}, sim.n_nodes, 9);
  AppConfig app;
  app.threshold_t = 30;
  const auto out = run_application(sim, plan, app, generate_synthetic(sim.n_nodes, 1));
  const auto fault = plan.fault_epochs();
  std::size_t remigrated = 0, died = 0;
  std::map<NodeId, std::size_t> migrations;
  for (const auto& e : out.trace.events) {
    if (e.kind == "migrate" && ++migrations[e.node] > 1) {
      ++remigrated;
      EXPECT_NE(e.other, e.node);
    }
    if (e.kind == "agent_died") {
      ++died;
      ASSERT_TRUE(fault[e.other].has_value());
      EXPECT_EQ(*fault[e.other], e.epoch);  // died with its host
    }
  }
  EXPECT_GT(remigrated, 0u);
  EXPECT_GT(died, 0u);
}
