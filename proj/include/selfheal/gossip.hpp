#pragma once

// Peer sampling: every node keeps a bounded partial view of timestamped
// descriptors and refreshes it through push-pull exchanges with a peer drawn
// from the same view. Merge follows the healer/swap scheme: keep the freshest
// descriptor per node, drop the H oldest, drop up to S of the entries that were
// just sent, then evict at random down to capacity.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "selfheal/fault_model.hpp"
#include "selfheal/rng.hpp"

namespace selfheal {

using NodeId = std::uint32_t;

struct Descriptor {
  NodeId node_id = 0;
  Epoch created_at = 0;

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

enum class PeerSelection : std::uint8_t { random, oldest };

struct GossipConfig {
  std::size_t view_capacity = 50;
  std::size_t healer_H = 1;
  std::size_t swap_S = 24;
  PeerSelection peer_selection = PeerSelection::random;

  /// Descriptors taken from the view per exchange, on top of the sender's own.
  std::size_t buffer_from_view() const { return view_capacity / 2 > 0 ? view_capacity / 2 - 1 : 0; }
};

inline void validate(const GossipConfig& c) {
  if (c.view_capacity < 2) throw std::invalid_argument("gossip.view_capacity must be >= 2");
  if (c.healer_H + c.swap_S > c.view_capacity) {
    throw std::invalid_argument("gossip.healer + gossip.swap must not exceed gossip.view_capacity");
  }
}

class PartialView {
 public:
  PartialView() = default;
  PartialView(NodeId owner, std::size_t capacity) : owner_(owner), capacity_(capacity) {}

  NodeId owner() const { return owner_; }
  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::span<const Descriptor> entries() const { return entries_; }
  std::vector<Descriptor>& mutable_entries() { return entries_; }

  std::optional<Descriptor> find(NodeId id) const {
    for (const auto& d : entries_) {
      if (d.node_id == id) return d;
    }
    return std::nullopt;
  }

  bool contains(NodeId id) const { return find(id).has_value(); }

  /// Capacity, no-self, and one-entry-per-node.
  bool invariants_hold() const {
    if (entries_.size() > capacity_) return false;
    std::vector<NodeId> ids;
    ids.reserve(entries_.size());
    for (const auto& d : entries_) {
      if (d.node_id == owner_) return false;
      ids.push_back(d.node_id);
    }
    std::sort(ids.begin(), ids.end());
    return std::adjacent_find(ids.begin(), ids.end()) == ids.end();
  }

 private:
  NodeId owner_ = 0;
  std::size_t capacity_ = 0;
  std::vector<Descriptor> entries_;
};

namespace detail {

/// Stable dedup keeping the freshest descriptor of each node at the position of
/// its first occurrence; drops descriptors of `self`.
inline void dedupe_freshest(std::vector<Descriptor>& v, NodeId self) {
  struct Slot {
    Descriptor d;
    std::size_t pos;
  };
  std::vector<Slot> slots;
  slots.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (v[i].node_id != self) slots.push_back({v[i], i});
  }
  std::sort(slots.begin(), slots.end(), [](const Slot& a, const Slot& b) {
    if (a.d.node_id != b.d.node_id) return a.d.node_id < b.d.node_id;
    return a.pos < b.pos;
  });
  std::vector<Slot> kept;
  kept.reserve(slots.size());
  for (std::size_t i = 0; i < slots.size();) {
    std::size_t j = i;
    Slot best = slots[i];
    for (; j < slots.size() && slots[j].d.node_id == slots[i].d.node_id; ++j) {
      if (slots[j].d.created_at > best.d.created_at) best.d = slots[j].d;
    }
    kept.push_back(best);  // position of the first occurrence
    i = j;
  }
  std::sort(kept.begin(), kept.end(), [](const Slot& a, const Slot& b) { return a.pos < b.pos; });
  v.clear();
  for (const auto& s : kept) v.push_back(s.d);
}

inline void remove_oldest(std::vector<Descriptor>& v, std::size_t count) {
  if (count == 0) return;
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return v[a].created_at < v[b].created_at; });
  std::vector<bool> drop(v.size(), false);
  for (std::size_t i = 0; i < count && i < order.size(); ++i) drop[order[i]] = true;
  std::size_t w = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!drop[i]) v[w++] = v[i];
  }
  v.resize(w);
}

}  // namespace detail

/// Shuffles the view, moves the H oldest entries to its tail, and returns the
/// exchange buffer: the owner's fresh descriptor followed by the view head.
inline std::vector<Descriptor> make_buffer(PartialView& view, Epoch now, const GossipConfig& cfg, Rng& rng) {
  auto& e = view.mutable_entries();
  rng.shuffle(std::span<Descriptor>(e));
  const std::size_t h = std::min(cfg.healer_H, e.size());
  if (h > 0) {
    std::vector<std::size_t> order(e.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return e[a].created_at < e[b].created_at; });
    std::vector<bool> old(e.size(), false);
    for (std::size_t i = 0; i < h; ++i) old[order[i]] = true;
    std::vector<Descriptor> reordered;
    reordered.reserve(e.size());
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (!old[i]) reordered.push_back(e[i]);
    }
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (old[i]) reordered.push_back(e[i]);
    }
    e = std::move(reordered);
  }
  std::vector<Descriptor> buf;
  buf.reserve(cfg.buffer_from_view() + 1);
  buf.push_back({view.owner(), now});
  for (std::size_t i = 0; i < e.size() && i < cfg.buffer_from_view(); ++i) buf.push_back(e[i]);
  return buf;
}

/// Folds a received buffer into the view. `sent` is what this node sent in the same exchange.
inline void merge_view(PartialView& view, std::span<const Descriptor> sent, std::span<const Descriptor> received,
                       const GossipConfig& cfg, Rng& rng) {
  auto& e = view.mutable_entries();
  e.insert(e.end(), received.begin(), received.end());
  detail::dedupe_freshest(e, view.owner());

  const std::size_t c = view.capacity();
  auto excess = [&] { return e.size() > c ? e.size() - c : std::size_t{0}; };

  detail::remove_oldest(e, std::min(cfg.healer_H, excess()));

  std::size_t swap = std::min(cfg.swap_S, excess());
  if (swap > 0) {
    // only entries still exactly as sent; a descriptor refreshed by the reply stays, and so does the partner's
    std::vector<Descriptor> sent_sorted(sent.begin(), sent.end());
    auto less = [](const Descriptor& a, const Descriptor& b) {
      return a.node_id != b.node_id ? a.node_id < b.node_id : a.created_at < b.created_at;
    };
    std::sort(sent_sorted.begin(), sent_sorted.end(), less);
    std::size_t w = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      const bool partner = !received.empty() && e[i] == received.front();
      if (swap > 0 && !partner && std::binary_search(sent_sorted.begin(), sent_sorted.end(), e[i], less)) {
        --swap;
        continue;
      }
      e[w++] = e[i];
    }
    e.resize(w);
  }

  // the partner's own fresh descriptor is never the random victim
  while (e.size() > c) {
    const auto pos = received.empty()
                         ? e.size()
                         : static_cast<std::size_t>(std::find(e.begin(), e.end(), received.front()) - e.begin());
    const bool protect = pos < e.size();
    auto victim = static_cast<std::size_t>(rng.below(e.size() - (protect ? 1 : 0)));
    if (protect && victim >= pos) ++victim;
    e.erase(e.begin() + static_cast<std::ptrdiff_t>(victim));
  }
}

inline std::optional<NodeId> select_peer(const PartialView& view, PeerSelection policy, Rng& rng) {
  const auto e = view.entries();
  if (e.empty()) return std::nullopt;
  if (policy == PeerSelection::oldest) {
    return std::min_element(e.begin(), e.end(), [](const Descriptor& a, const Descriptor& b) {
             return a.created_at < b.created_at;
           })->node_id;
  }
  return e[static_cast<std::size_t>(rng.below(e.size()))].node_id;
}

/// All partial views of a network plus crash state. Faulty nodes are silent.
struct Overlay {
  std::vector<PartialView> views;
  std::vector<std::uint8_t> alive;

  std::size_t size() const { return views.size(); }
  bool is_alive(NodeId id) const { return alive[id] != 0; }
};

/// Every view filled with distinct uniformly random other nodes, timestamped 0.
inline Overlay bootstrap_overlay(std::size_t n, const GossipConfig& cfg, Rng& rng) {
  validate(cfg);
  Overlay o;
  o.views.reserve(n);
  o.alive.assign(n, 1);
  const std::size_t fill = std::min(cfg.view_capacity, n == 0 ? 0 : n - 1);
  std::vector<NodeId> others;
  for (std::size_t i = 0; i < n; ++i) {
    PartialView v(static_cast<NodeId>(i), cfg.view_capacity);
    // partial Fisher-Yates over the other n-1 ids
    others.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) others.push_back(static_cast<NodeId>(j));
    }
    for (std::size_t j = 0; j < fill; ++j) {
      const auto r = j + static_cast<std::size_t>(rng.below(others.size() - j));
      std::swap(others[j], others[r]);
      v.mutable_entries().push_back({others[j], 0});
    }
    o.views.push_back(std::move(v));
  }
  return o;
}

enum class RoundOutcome : std::uint8_t { exchanged, peer_faulty, idle };

/// One active push-pull exchange initiated by `node`.
inline RoundOutcome gossip_round(Overlay& net, NodeId node, Epoch now, const GossipConfig& cfg, Rng& rng) {
  if (!net.is_alive(node)) return RoundOutcome::idle;
  auto& mine = net.views[node];
  const auto peer = select_peer(mine, cfg.peer_selection, rng);
  if (!peer) return RoundOutcome::idle;
  if (!net.is_alive(*peer)) return RoundOutcome::peer_faulty;  // message lost
  auto& theirs = net.views[*peer];
  const auto out = make_buffer(mine, now, cfg, rng);
  const auto back = make_buffer(theirs, now, cfg, rng);
  merge_view(theirs, back, out, cfg, rng);
  merge_view(mine, out, back, cfg, rng);
  return RoundOutcome::exchanged;
}

/// A view as observed at the end of some epoch.
struct ViewSnapshot {
  Epoch epoch = 0;
  std::vector<Descriptor> entries;
};

/// Latest epoch at which the history shows a descriptor of `target` created after `since`.
template <class Range>
std::optional<Epoch> freshest_seen(const Range& history, NodeId target, Epoch since) {
  std::optional<Epoch> best;
  for (const auto& snap : history) {
    for (const auto& d : snap.entries) {
      if (d.node_id == target && d.created_at > since) {
        if (!best || snap.epoch > *best) best = snap.epoch;
        break;
      }
    }
  }
  return best;
}

}  // namespace selfheal
