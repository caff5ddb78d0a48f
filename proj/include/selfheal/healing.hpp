#pragma once

// Self-healing agents. Each node places an agent, carrying a replica of its
// supplier state, on a random host taken from its partial view. The agent
// watches for the parent's descriptor in the host's view and decides between
// tolerating the silence and correcting: rolling the parent's value back at
// every consumer that aggregated it, one consumer per epoch.

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "selfheal/fault_model.hpp"
#include "selfheal/gossip.hpp"
#include "selfheal/rng.hpp"

namespace selfheal {

enum class AgentState : std::uint8_t { monitoring, correcting, returned };

enum class Decision : std::uint8_t { tolerate, correct, return_to_parent };

struct SelfHealingAgent {
  NodeId parent_id = 0;
  NodeId host_id = 0;
  Epoch migrated_at = 0;
  Epoch last_fresh_sighting = 0;
  Epoch threshold_t = 1;
  AgentState state = AgentState::monitoring;
  /// Epoch the parent actually left; a returning parent announces descriptors newer than this.
  std::optional<Epoch> departed_at;
};

/// Places the agent on a host drawn uniformly from the parent's view.
/// Returns false (agent untouched) when the view offers no candidate.
inline bool migrate(SelfHealingAgent& agent, const PartialView& parent_view, Epoch now, Rng& rng) {
  std::vector<NodeId> candidates;
  candidates.reserve(parent_view.size());
  for (const auto& d : parent_view.entries()) {
    if (d.node_id != agent.parent_id) candidates.push_back(d.node_id);
  }
  if (candidates.empty()) return false;
  agent.host_id = candidates[static_cast<std::size_t>(rng.below(candidates.size()))];
  agent.migrated_at = now;
  agent.last_fresh_sighting = now;
  return true;
}

/// One epoch of monitoring through the host's view.
inline Decision monitor_step(SelfHealingAgent& agent, const PartialView& host_view, Epoch now) {
  const auto seen = host_view.find(agent.parent_id);
  switch (agent.state) {
    case AgentState::monitoring:
      if (seen && seen->created_at > agent.migrated_at) agent.last_fresh_sighting = now;
      if (now - agent.last_fresh_sighting > agent.threshold_t) {
        agent.state = AgentState::correcting;
        return Decision::correct;
      }
      return Decision::tolerate;
    case AgentState::correcting:
      if (agent.departed_at && seen && seen->created_at > *agent.departed_at) {
        agent.state = AgentState::returned;
        return Decision::return_to_parent;
      }
      return Decision::tolerate;
    case AgentState::returned:
      return Decision::tolerate;
  }
  return Decision::tolerate;
}

/// Rollback requests still owed by a correcting agent, paced one contact per epoch.
class RollbackSchedule {
 public:
  RollbackSchedule() = default;
  RollbackSchedule(NodeId supplier, std::span<const NodeId> consumers)
      : supplier_(supplier), pending_(consumers.begin(), consumers.end()) {}

  NodeId supplier() const { return supplier_; }
  bool done() const { return pending_.empty(); }
  std::size_t remaining() const { return pending_.size(); }
  std::span<const NodeId> issued() const { return issued_; }
  std::span<const NodeId> skipped() const { return skipped_; }

  /// Contacts the next consumer. `consumer_alive(id)` decides whether the
  /// request lands; `apply(id)` performs the rollback. Returns the contacted id.
  template <class AliveFn, class ApplyFn>
  std::optional<NodeId> step(AliveFn&& consumer_alive, ApplyFn&& apply) {
    if (pending_.empty()) return std::nullopt;
    const NodeId c = pending_.front();
    pending_.pop_front();
    if (consumer_alive(c)) {
      apply(c);
      issued_.push_back(c);
    } else {
      skipped_.push_back(c);
    }
    return c;
  }

  /// Stops further rollbacks; consumers not yet contacted stay as they are.
  void interrupt() { pending_.clear(); }

 private:
  NodeId supplier_ = 0;
  std::deque<NodeId> pending_;
  std::vector<NodeId> issued_;
  std::vector<NodeId> skipped_;
};

/// Starts correction for an agent whose decision was `correct`.
inline RollbackSchedule correct(const SelfHealingAgent& agent, std::span<const NodeId> consumers_holding_value) {
  return RollbackSchedule(agent.parent_id, consumers_holding_value);
}

}  // namespace selfheal
