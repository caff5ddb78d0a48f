#pragma once

// Epoch-driven simulation: applies the fault plan, runs one gossip round per
// alive node per epoch, tracks for every ordered pair (A, B) the last epoch at
// which A's view held a descriptor of B, and derives detection times for any
// number of thresholds from the same gossip trace.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "selfheal/fault_model.hpp"
#include "selfheal/gossip.hpp"
#include "selfheal/rng.hpp"

namespace selfheal {

/// Named RNG streams; each subsystem draws from its own so that, for example,
/// turning agents on does not perturb the gossip trace.
enum class RngStream : std::uint64_t { gossip = 1, faults = 2, agents = 3, aggregation = 4, data = 5 };

inline Rng make_rng(std::uint64_t seed, RngStream s) {
  return Rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
}

enum class MonitoringMode : std::uint8_t { all_pairs, agent_per_node };

struct SimConfig {
  std::size_t n_nodes = 3000;
  Epoch epochs_T = 3200;
  Epoch bootstrap_epochs = 400;
  std::string epoch_duration_label = "250 ms";
  std::uint64_t seed = 1;
  GossipConfig gossip{};
  Epoch threshold_t = 100;
  MonitoringMode monitoring_mode = MonitoringMode::all_pairs;
  /// Thresholds tracked over the same trace in all_pairs mode; empty means {threshold_t}.
  std::vector<Epoch> pair_thresholds;

  std::vector<Epoch> tracked_thresholds() const {
    auto v = pair_thresholds.empty() ? std::vector<Epoch>{threshold_t} : pair_thresholds;
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
  }
};

inline void validate(const SimConfig& c) {
  if (c.n_nodes < 2) throw std::invalid_argument("nodes must be >= 2");
  if (c.epochs_T < 1) throw std::invalid_argument("epochs must be >= 1");
  if (c.bootstrap_epochs < 0 || c.bootstrap_epochs >= c.epochs_T) {
    throw std::invalid_argument("bootstrap_epochs must lie in [0, epochs)");
  }
  if (c.threshold_t < 1) throw std::invalid_argument("threshold must be >= 1");
  for (Epoch t : c.pair_thresholds) {
    if (t < 1 || t > c.epochs_T) throw std::invalid_argument("thresholds must lie in [1, epochs]");
  }
  validate(c.gossip);
}

struct FaultPlan {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t k = 0;
  std::vector<Epoch> batch_epochs;
  std::vector<std::vector<NodeId>> faulty_node_ids;
  std::map<NodeId, Epoch> recoveries;

  /// Fault epoch per node, nullopt for nodes that never fail.
  std::vector<std::optional<Epoch>> fault_epochs() const {
    std::vector<std::optional<Epoch>> out(n);
    for (std::size_t b = 0; b < faulty_node_ids.size(); ++b) {
      for (NodeId id : faulty_node_ids[b]) out[id] = batch_epochs[b];
    }
    return out;
  }
};

inline void validate(const FaultPlan& p) {
  if (p.m * p.k > p.n) throw std::invalid_argument("FaultPlan: m*k exceeds n");
  if (p.batch_epochs.size() != p.m || p.faulty_node_ids.size() != p.m) {
    throw std::invalid_argument("FaultPlan: expected m batches");
  }
  for (std::size_t i = 1; i < p.batch_epochs.size(); ++i) {
    if (p.batch_epochs[i] <= p.batch_epochs[i - 1]) {
      throw std::invalid_argument("FaultPlan: batch epochs must be strictly increasing");
    }
  }
  std::vector<std::uint8_t> seen(p.n, 0);
  for (const auto& batch : p.faulty_node_ids) {
    if (batch.size() != p.k) throw std::invalid_argument("FaultPlan: every batch must hold k nodes");
    for (NodeId id : batch) {
      if (id >= p.n) throw std::invalid_argument("FaultPlan: node id out of range");
      if (seen[id]++) throw std::invalid_argument("FaultPlan: batches must be disjoint");
    }
  }
  for (const auto& [id, r] : p.recoveries) {
    if (id >= p.n || !seen[id]) throw std::invalid_argument("FaultPlan: recovery for a node that never fails");
  }
}

/// A plan with no failures.
inline FaultPlan healthy_plan(std::size_t n) {
  FaultPlan p;
  p.n = n;
  return p;
}

enum class FaultProfile : std::uint8_t { P1, P2, P3 };

inline constexpr Epoch kReferenceEpochs = 3200;

inline std::string_view profile_name(FaultProfile p) {
  switch (p) {
    case FaultProfile::P1: return "P1";
    case FaultProfile::P2: return "P2";
    case FaultProfile::P3: return "P3";
  }
  return "?";
}

inline FaultProfile parse_profile(std::string_view s) {
  if (s == "P1") return FaultProfile::P1;
  if (s == "P2") return FaultProfile::P2;
  if (s == "P3") return FaultProfile::P3;
  throw std::invalid_argument("unknown fault profile '" + std::string(s) + "' (expected P1, P2 or P3)");
}

/// Batch epochs at the 3200-epoch reference runtime.
inline std::vector<Epoch> reference_batch_epochs(FaultProfile p) {
  switch (p) {
    case FaultProfile::P1: return {1600};
    case FaultProfile::P2: return {1332, 2264};
    case FaultProfile::P3: return {1060, 1620, 2180, 2740};
  }
  return {};
}

/// Rescale an epoch count from the reference runtime to `epochs_T`, rounding to nearest.
inline Epoch rescale_epoch(Epoch reference_value, Epoch epochs_T, Epoch reference_T = kReferenceEpochs) {
  if (epochs_T == reference_T) return reference_value;
  return static_cast<Epoch>(std::llround(static_cast<double>(reference_value) * static_cast<double>(epochs_T) /
                                         static_cast<double>(reference_T)));
}

struct FaultProfileSpec {
  FaultProfile profile_id = FaultProfile::P1;
  double fault_scale = 0.5;
  Epoch epochs_T = kReferenceEpochs;

  std::vector<Epoch> batch_epochs() const {
    auto v = reference_batch_epochs(profile_id);
    for (auto& e : v) e = rescale_epoch(e, epochs_T);
    return v;
  }
};

inline FaultPlan build_fault_plan(const FaultProfileSpec& spec, std::size_t n, std::uint64_t seed) {
  if (!(spec.fault_scale >= 0.0) || spec.fault_scale > 1.0) {
    throw std::invalid_argument("fault_scale must lie in [0, 1]: scale*n cannot exceed n");
  }
  const auto epochs = spec.batch_epochs();
  const std::size_t m = epochs.size();
  const double total_real = spec.fault_scale * static_cast<double>(n);
  const auto total = static_cast<std::size_t>(std::llround(total_real));
  if (std::abs(total_real - static_cast<double>(total)) > 1e-6) {
    throw std::invalid_argument("fault_scale * nodes is not a whole number of nodes");
  }
  if (total % m != 0) {
    throw std::invalid_argument(std::to_string(total) + " faulty nodes cannot be split into " + std::to_string(m) +
                                " equal batches");
  }
  FaultPlan p;
  p.n = n;
  p.m = m;
  p.k = total / m;
  p.batch_epochs = epochs;

  Rng rng = make_rng(seed, RngStream::faults);
  std::vector<NodeId> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
  for (std::size_t i = 0; i < total; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(ids[i], ids[j]);
  }
  p.faulty_node_ids.resize(m);
  for (std::size_t b = 0; b < m; ++b) {
    p.faulty_node_ids[b].assign(ids.begin() + static_cast<std::ptrdiff_t>(b * p.k),
                                ids.begin() + static_cast<std::ptrdiff_t>((b + 1) * p.k));
    std::sort(p.faulty_node_ids[b].begin(), p.faulty_node_ids[b].end());
  }
  return p;
}

/// Staleness detector over a sequence of sightings for several thresholds at
/// once. A threshold t fires at last + t + 1 when no sighting arrives in
/// (last, last + t + 1]; only the first firing is kept.
class SightingTracker {
 public:
  static constexpr std::int32_t kNone = 0;

  SightingTracker() = default;
  SightingTracker(std::size_t pairs, std::vector<Epoch> thresholds, Epoch baseline)
      : thresholds_(std::move(thresholds)),
        last_(pairs, static_cast<std::int32_t>(baseline)),
        detection_(thresholds_.size(), std::vector<std::int32_t>(pairs, kNone)) {}

  std::span<const Epoch> thresholds() const { return thresholds_; }

  void sight(std::size_t pair, Epoch now) {
    const Epoch last = last_[pair];
    if (now <= last) return;
    for (std::size_t i = 0; i < thresholds_.size(); ++i) {
      const Epoch fire = last + thresholds_[i] + 1;
      if (now <= fire) break;  // sorted ascending: larger thresholds are not stale either
      auto& d = detection_[i][pair];
      if (d == kNone) d = static_cast<std::int32_t>(fire);
    }
    last_[pair] = static_cast<std::int32_t>(now);
  }

  /// Closes the observation window of a pair whose monitor observes up to `horizon`.
  void finish(std::size_t pair, Epoch horizon) {
    const Epoch last = last_[pair];
    for (std::size_t i = 0; i < thresholds_.size(); ++i) {
      const Epoch fire = last + thresholds_[i] + 1;
      if (fire > horizon) break;
      auto& d = detection_[i][pair];
      if (d == kNone) d = static_cast<std::int32_t>(fire);
    }
  }

  std::optional<Epoch> detection(std::size_t threshold_index, std::size_t pair) const {
    const auto d = detection_[threshold_index][pair];
    if (d == kNone) return std::nullopt;
    return d;
  }

  Epoch last_sighting(std::size_t pair) const { return last_[pair]; }

 private:
  std::vector<Epoch> thresholds_;
  std::vector<std::int32_t> last_;
  std::vector<std::vector<std::int32_t>> detection_;
};

struct EventRecord {
  Epoch epoch = 0;
  std::string kind;
  NodeId node = 0;
  NodeId other = 0;
  double value = 0.0;
};

struct SimTrace {
  std::size_t n = 0;
  Epoch epochs_T = 0;
  Epoch bootstrap_epochs = 0;
  std::vector<std::optional<Epoch>> fault_epoch;
  SightingTracker pairs;  // all_pairs mode; index = A * n + B
  std::vector<EventRecord> events;
  std::uint64_t view_digest = 0;

  std::size_t pair_index(NodeId a, NodeId b) const { return static_cast<std::size_t>(a) * n + b; }

  PairRecord record(std::size_t threshold_index, NodeId a, NodeId b) const {
    PairRecord r;
    r.runtime_T = epochs_T;
    r.threshold_t = pairs.thresholds()[threshold_index];
    r.fault_A = fault_epoch[a];
    r.fault_B = fault_epoch[b];
    r.detection_d = pairs.detection(threshold_index, pair_index(a, b));
    return r;
  }

  /// Calls fn(a, b, record) for every ordered pair with a != b.
  template <class Fn>
  void for_each_record(std::size_t threshold_index, Fn&& fn) const {
    for (NodeId a = 0; a < n; ++a) {
      for (NodeId b = 0; b < n; ++b) {
        if (a != b) fn(a, b, record(threshold_index, a, b));
      }
    }
  }

  /// Digest over fault epochs, detections, final views and the event log.
  std::uint64_t digest() const {
    std::uint64_t h = view_digest;
    auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
    for (const auto& f : fault_epoch) mix(f ? static_cast<std::uint64_t>(*f) : ~0ULL);
    for (std::size_t ti = 0; ti < pairs.thresholds().size(); ++ti) {
      for (std::size_t p = 0; p < n * n; ++p) {
        const auto d = pairs.detection(ti, p);
        mix(d ? static_cast<std::uint64_t>(*d) : 0);
      }
    }
    for (const auto& e : events) {
      mix(static_cast<std::uint64_t>(e.epoch));
      mix(hash_string(e.kind));
      mix(e.node);
      mix(e.other);
      std::uint64_t bits;
      std::memcpy(&bits, &e.value, sizeof bits);
      mix(bits);
    }
    return h;
  }
};

/// What a hook sees once gossip and observation of an epoch are done.
struct EpochContext {
  Epoch now = 0;
  const SimConfig& config;
  Overlay& overlay;
  const std::vector<std::optional<Epoch>>& fault_epoch;
  std::vector<EventRecord>& events;
};

using EpochHook = std::function<void(EpochContext&)>;

/// Runs the whole schedule. Hooks are invoked at the end of every epoch in order.
inline SimTrace run(const SimConfig& cfg, const FaultPlan& plan, std::span<const EpochHook> hooks = {}) {
  validate(cfg);
  validate(plan);
  if (plan.n != cfg.n_nodes) throw std::invalid_argument("fault plan node count differs from config");

  const std::size_t n = cfg.n_nodes;
  Rng gossip_rng = make_rng(cfg.seed, RngStream::gossip);
  Overlay overlay = bootstrap_overlay(n, cfg.gossip, gossip_rng);

  SimTrace trace;
  trace.n = n;
  trace.epochs_T = cfg.epochs_T;
  trace.bootstrap_epochs = cfg.bootstrap_epochs;
  trace.fault_epoch = plan.fault_epochs();
  const bool all_pairs = cfg.monitoring_mode == MonitoringMode::all_pairs;
  if (all_pairs) trace.pairs = SightingTracker(n * n, cfg.tracked_thresholds(), cfg.bootstrap_epochs);

  std::vector<std::vector<NodeId>> crash_at(static_cast<std::size_t>(cfg.epochs_T) + 2);
  std::vector<std::vector<NodeId>> recover_at(static_cast<std::size_t>(cfg.epochs_T) + 2);
  for (NodeId id = 0; id < n; ++id) {
    const auto& f = trace.fault_epoch[id];
    if (f && *f <= cfg.epochs_T) crash_at[static_cast<std::size_t>(*f)].push_back(id);
  }
  for (const auto& [id, r] : plan.recoveries) {
    if (r >= 1 && r <= cfg.epochs_T) recover_at[static_cast<std::size_t>(r)].push_back(id);
  }

  std::vector<NodeId> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = static_cast<NodeId>(i);

  for (Epoch now = 1; now <= cfg.epochs_T; ++now) {
    for (NodeId id : crash_at[static_cast<std::size_t>(now)]) overlay.alive[id] = 0;
    for (NodeId id : recover_at[static_cast<std::size_t>(now)]) overlay.alive[id] = 1;

    gossip_rng.shuffle(std::span<NodeId>(order));
    for (NodeId id : order) gossip_round(overlay, id, now, cfg.gossip, gossip_rng);

    if (all_pairs && now > cfg.bootstrap_epochs) {
      for (NodeId a = 0; a < n; ++a) {
        const auto& fa = trace.fault_epoch[a];
        if (fa && now >= *fa) continue;  // a monitor stops observing once it has failed
        const std::size_t row = static_cast<std::size_t>(a) * n;
        for (const auto& d : overlay.views[a].entries()) {
          if (d.created_at > cfg.bootstrap_epochs) trace.pairs.sight(row + d.node_id, now);
        }
      }
    }

    EpochContext ctx{now, cfg, overlay, trace.fault_epoch, trace.events};
    for (const auto& hook : hooks) hook(ctx);
  }

  if (all_pairs) {
    for (NodeId a = 0; a < n; ++a) {
      const auto& fa = trace.fault_epoch[a];
      const Epoch horizon = fa ? *fa - 1 : cfg.epochs_T;
      for (NodeId b = 0; b < n; ++b) {
        if (a != b) trace.pairs.finish(static_cast<std::size_t>(a) * n + b, horizon);
      }
    }
  }

  std::uint64_t h = 0x84222325cbf29ce4ULL;
  for (const auto& v : overlay.views) {
    for (const auto& d : v.entries()) h = splitmix64(h ^ (static_cast<std::uint64_t>(d.node_id) << 32) ^
                                                     static_cast<std::uint64_t>(d.created_at));
  }
  trace.view_digest = h;
  return trace;
}

}  // namespace selfheal
