#pragma once

// The aggregation application run on top of the simulation kernel. Every node
// supplies its consumption reading and aggregates what it hears from the
// suppliers in its partial view. Each consumer keeps two estimates: a faulty
// one that never corrects, and a corrective one maintained by self-healing
// agents that withdraw suspected suppliers and roll their values back.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "selfheal/aggregation.hpp"
#include "selfheal/dataset.hpp"
#include "selfheal/fault_model.hpp"
#include "selfheal/healing.hpp"
#include "selfheal/simkernel.hpp"

namespace selfheal {

struct AppConfig {
  Epoch threshold_t = 25;
  Epoch aggregation_period = 4;
  bool correction = true;
  MemoryMode memory = MemoryMode::exact;
  BloomParams bloom{};
};

inline void validate(const AppConfig& c) {
  if (c.threshold_t < 1) throw std::invalid_argument("threshold must be >= 1");
  if (c.aggregation_period < 1) throw std::invalid_argument("aggregation.period must be >= 1");
}

struct TimeseriesRow {
  Epoch epoch = 0;
  double actual_sum = 0.0;
  double faulty_estimate_mean = 0.0;
  double corrective_estimate_mean = 0.0;
  double avg_rel_error_faulty = 0.0;
  double avg_rel_error_corrective = 0.0;
};

/// Agent bookkeeping beyond the decision logic in healing.hpp.
struct AgentSlot {
  SelfHealingAgent agent;
  bool placed = false;
  bool dead = false;
  std::optional<Epoch> death;        // epoch the agent stopped monitoring for good
  std::optional<Epoch> detection;    // first `correct`
  std::optional<Epoch> host_failed;  // host down, new host not yet found
  std::size_t migrations = 0;
  RollbackSchedule rollback;
};

class AggregationApp {
 public:
  AggregationApp(const SimConfig& sim, const AppConfig& app, const ConsumptionDataset& data)
      : sim_(sim), cfg_(app), n_(sim.n_nodes), rng_(make_rng(sim.seed, RngStream::agents)) {
    validate(app);
    if (data.size() < n_) {
      throw DataError("dataset has " + std::to_string(data.size()) + " nodes, config needs " + std::to_string(n_));
    }
    series_.assign(data.nodes.begin(), data.nodes.begin() + static_cast<std::ptrdiff_t>(n_));
    version_.assign(n_, 0);
    withdrawn_.assign(n_, 0);
    holds_.assign(n_ * n_, 0);
    consumers_of_.resize(n_);
    faulty_.reserve(n_);
    corrective_.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      BloomParams b = app.bloom;
      b.salt = derive_seed(app.bloom.salt, i);
      faulty_.emplace_back(app.memory, b);
      corrective_.emplace_back(app.memory, b);
    }
    agents_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      agents_[i].agent.parent_id = static_cast<NodeId>(i);
      agents_[i].agent.threshold_t = app.threshold_t;
    }
  }

  /// Version of every supplier's reading at epoch `now`: 0 during bootstrap,
  /// then the 48 readings spread evenly over the remaining epochs.
  std::uint32_t scheduled_version(Epoch now) const {
    const Epoch b = sim_.bootstrap_epochs;
    if (now <= b) return 0;
    const Epoch span = sim_.epochs_T - b;
    const auto v = (now - b - 1) * static_cast<Epoch>(kRecordsPerNode) / span;
    return static_cast<std::uint32_t>(std::min<Epoch>(v, kRecordsPerNode - 1));
  }

  EpochHook hook() {
    return [this](EpochContext& ctx) { step(ctx); };
  }

  void step(EpochContext& ctx) {
    const Epoch now = ctx.now;
    const auto& alive = ctx.overlay.alive;

    const auto v = scheduled_version(now);
    for (std::size_t i = 0; i < n_; ++i) {
      if (alive[i] && version_[i] < v) version_[i] = v;
    }

    if (cfg_.correction) step_agents(ctx);

    if (now % cfg_.aggregation_period == 0) {
      for (NodeId c = 0; c < n_; ++c) {
        if (!alive[c]) continue;
        exchange(c, c);
        for (const auto& d : ctx.overlay.views[c].entries()) {
          if (alive[d.node_id]) exchange(c, d.node_id);
        }
      }
    }

    record(now, alive);
  }

  std::span<const TimeseriesRow> timeseries() const { return rows_; }
  std::span<const AgentSlot> agents() const { return agents_; }
  const AggregateState& faulty_state(NodeId c) const { return faulty_[c]; }
  const AggregateState& corrective_state(NodeId c) const { return corrective_[c]; }
  double current_value(NodeId s) const { return series_[s][version_[s]]; }
  bool withdrawn(NodeId s) const { return withdrawn_[s] != 0; }

  /// Mean corrective relative error over the epochs after bootstrap.
  double app_error() const {
    double acc = 0.0;
    std::size_t k = 0;
    for (const auto& r : rows_) {
      if (r.epoch > sim_.bootstrap_epochs) {
        acc += r.avg_rel_error_corrective;
        ++k;
      }
    }
    return k ? acc / static_cast<double>(k) : 0.0;
  }

  /// One pair record per node, seen from its agent: the agent's death plays the monitor's failure.
  std::vector<PairRecord> agent_records(const std::vector<std::optional<Epoch>>& fault_epoch) const {
    std::vector<PairRecord> out;
    out.reserve(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const auto& a = agents_[i];
      PairRecord r;
      r.runtime_T = sim_.epochs_T;
      r.threshold_t = cfg_.threshold_t;
      r.fault_B = fault_epoch[i];
      if (a.placed) r.fault_A = a.death;  // an agent lost before placement never monitors
      r.detection_d = a.detection;
      out.push_back(r);
    }
    return out;
  }

 private:
  SupplierState supplier(NodeId s) const {
    return SupplierState{s, series_[s][version_[s]], version_[s], std::span<const double>(series_[s])};
  }

  void exchange(NodeId c, NodeId s) {
    const auto st = supplier(s);
    faulty_[c].exchange(st);
    if (withdrawn_[s]) return;
    corrective_[c].exchange(st);
    auto& h = holds_[static_cast<std::size_t>(s) * n_ + c];
    if (!h) {
      h = 1;
      consumers_of_[s].push_back(c);
    }
  }

  Epoch migration_epoch() const { return std::max<Epoch>(sim_.bootstrap_epochs, 1); }

  void step_agents(EpochContext& ctx) {
    const Epoch now = ctx.now;
    const auto& alive = ctx.overlay.alive;
    const auto& views = ctx.overlay.views;
    const auto& fault = ctx.fault_epoch;

    for (std::size_t i = 0; i < n_; ++i) {
      auto& slot = agents_[i];
      auto& a = slot.agent;
      if (slot.dead) continue;

      if (!slot.placed) {
        if (now < migration_epoch()) continue;
        if (!alive[i]) {  // parent gone before its agent left
          slot.dead = true;
          ctx.events.push_back({now, "agent_lost", a.parent_id, a.parent_id, 0.0});
          continue;
        }
        if (migrate(a, views[i], now, rng_)) {
          slot.placed = true;
          ++slot.migrations;
          ctx.events.push_back({now, "migrate", a.parent_id, a.host_id, 0.0});
        }
        continue;
      }

      if (!a.departed_at && fault[i] && *fault[i] <= now && !alive[i]) a.departed_at = *fault[i];

      if (slot.host_failed || !alive[a.host_id]) {
        if (!slot.host_failed) {
          slot.host_failed = now;
          if (!alive[i]) {  // no parent left to serve
            slot.dead = true;
            slot.death = now;
            slot.rollback.interrupt();
            ctx.events.push_back({now, "agent_died", a.parent_id, a.host_id, 0.0});
            continue;
          }
          continue;  // re-migrate next epoch from the host's last view
        }
        const NodeId old_host = a.host_id;
        SelfHealingAgent probe = a;
        if (migrate(probe, views[old_host], now, rng_) && alive[probe.host_id]) {
          a.host_id = probe.host_id;
          a.migrated_at = now;
          if (a.state == AgentState::monitoring) a.last_fresh_sighting = now;
          slot.host_failed.reset();
          ++slot.migrations;
          ctx.events.push_back({now, "migrate", a.parent_id, a.host_id, 0.0});
        }
        continue;
      }

      switch (monitor_step(a, views[a.host_id], now)) {
        case Decision::correct: {
          slot.detection = now;
          withdrawn_[i] = 1;
          auto& list = consumers_of_[i];
          std::sort(list.begin(), list.end());
          slot.rollback = correct(a, list);
          ctx.events.push_back({now, "correct", a.parent_id, a.host_id, static_cast<double>(list.size())});
          break;
        }
        case Decision::return_to_parent:
          withdrawn_[i] = 0;
          slot.rollback.interrupt();
          ctx.events.push_back({now, "return", a.parent_id, a.host_id, 0.0});
          break;
        case Decision::tolerate:
          break;
      }

      if (a.state == AgentState::correcting && !slot.rollback.done()) {
        const auto contacted = slot.rollback.step([&](NodeId c) { return alive[c] != 0; },
                                                  [&](NodeId c) {
                                                    corrective_[c].rollback(a.parent_id, series_[i]);
                                                    holds_[i * n_ + c] = 0;
                                                  });
        if (contacted) ctx.events.push_back({now, "rollback", a.parent_id, *contacted, alive[*contacted] ? 1.0 : 0.0});
        if (slot.rollback.done()) {
          auto& list = consumers_of_[i];
          list.erase(std::remove_if(list.begin(), list.end(),
                                    [&](NodeId c) { return !holds_[i * n_ + c]; }),
                     list.end());
        }
      }
    }
  }

  void record(Epoch now, const std::vector<std::uint8_t>& alive) {
    TimeseriesRow r;
    r.epoch = now;
    std::vector<double> fe, ce;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!alive[i]) continue;
      r.actual_sum += series_[i][version_[i]];
      fe.push_back(faulty_[i].sum());
      ce.push_back(corrective_[i].sum());
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    r.faulty_estimate_mean = mean(fe);
    r.corrective_estimate_mean = mean(ce);
    r.avg_rel_error_faulty = relative_approx_error(fe, r.actual_sum);
    r.avg_rel_error_corrective = relative_approx_error(ce, r.actual_sum);
    rows_.push_back(r);
  }

  SimConfig sim_;
  AppConfig cfg_;
  std::size_t n_;
  Rng rng_;
  std::vector<NodeSeries> series_;
  std::vector<std::uint32_t> version_;
  std::vector<std::uint8_t> withdrawn_;
  std::vector<std::uint8_t> holds_;  // supplier * n + consumer: corrective state counts the supplier
  std::vector<std::vector<NodeId>> consumers_of_;
  std::vector<AggregateState> faulty_;
  std::vector<AggregateState> corrective_;
  std::vector<AgentSlot> agents_;
  std::vector<TimeseriesRow> rows_;
};

struct AppRun {
  SimTrace trace;
  std::vector<TimeseriesRow> timeseries;
  std::vector<PairRecord> agent_records;
  double app_error = 0.0;
};

/// Runs the kernel in agent mode with the application attached.
inline AppRun run_application(SimConfig sim, const FaultPlan& plan, const AppConfig& app,
                              const ConsumptionDataset& data) {
  sim.monitoring_mode = MonitoringMode::agent_per_node;
  sim.threshold_t = app.threshold_t;
  AggregationApp a(sim, app, data);
  const EpochHook hooks[] = {a.hook()};
  AppRun out;
  out.trace = run(sim, plan, hooks);
  out.timeseries.assign(a.timeseries().begin(), a.timeseries().end());
  out.agent_records = a.agent_records(out.trace.fault_epoch);
  out.app_error = a.app_error();
  return out;
}

}  // namespace selfheal
