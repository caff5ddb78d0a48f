#pragma once

// Decentralized aggregation: every node supplies a value and every node
// aggregates the values it has been handed. A consumer remembers what it
// counted per supplier so that updates replace the old value, duplicates are
// suppressed, and departed suppliers can be rolled back.

#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <unordered_map>

#include "selfheal/bloom.hpp"
#include "selfheal/gossip.hpp"

namespace selfheal {

struct SupplierState {
  NodeId node_id = 0;
  double current_value = 0.0;
  std::uint32_t version = 0;
  /// Value per version; needed only by Bloom-mode consumers, which cannot
  /// remember the value they counted and ask the supplier instead.
  std::span<const double> values_by_version;
};

enum class MemoryMode : std::uint8_t { exact, bloom };

struct BloomParams {
  std::size_t m_bits = 1 << 14;
  std::size_t k_hashes = 7;
  std::uint64_t salt = 0x5EED;
};

enum class ExchangeResult : std::uint8_t { added, replaced, duplicate };

class AggregateState {
 public:
  explicit AggregateState(MemoryMode mode = MemoryMode::exact, BloomParams bloom = {})
      : mode_(mode),
        seen_(mode == MemoryMode::bloom ? bloom.m_bits : 1, bloom.k_hashes, bloom.salt),
        versions_(mode == MemoryMode::bloom ? bloom.m_bits : 1, bloom.k_hashes, bloom.salt ^ 0x9E3779B9ULL) {}

  MemoryMode mode() const { return mode_; }
  double sum() const { return sum_; }
  std::int64_t count() const { return count_; }
  double avg() const { return count_ > 0 ? sum_ / static_cast<double>(count_) : 0.0; }
  std::optional<double> min() const { return values_.empty() ? std::nullopt : std::optional(*values_.begin()); }
  std::optional<double> max() const { return values_.empty() ? std::nullopt : std::optional(*values_.rbegin()); }

  /// Remembered (value, version) per supplier. Exact mode only.
  struct Entry {
    double value;
    std::uint32_t version;
  };
  const std::unordered_map<NodeId, Entry>& memory() const { return memory_; }
  const std::multiset<double>& remembered_values() const { return values_; }

  /// Bloom-mode memory: supplier ids seen, and (supplier, version) keys counted.
  const CountingBloomFilter& seen_filter() const { return seen_; }
  const CountingBloomFilter& version_filter() const { return versions_; }
  static std::uint64_t version_key(NodeId id, std::uint32_t v) { return (static_cast<std::uint64_t>(id) << 32) | v; }

  ExchangeResult exchange(const SupplierState& s) {
    return mode_ == MemoryMode::exact ? exchange_exact(s) : exchange_bloom(s);
  }

  /// Removes the supplier's counted value. Returns false when nothing was removed.
  bool rollback(NodeId supplier, std::span<const double> values_by_version = {}) {
    if (mode_ == MemoryMode::exact) {
      auto it = memory_.find(supplier);
      if (it == memory_.end()) return false;
      drop_value(it->second.value);
      memory_.erase(it);
      return true;
    }
    if (!seen_.contains(supplier)) return false;
    const auto v = counted_version(supplier, values_by_version.size());
    if (!v) return false;
    drop_value(values_by_version[*v]);
    versions_.remove(version_key(supplier, *v));
    seen_.remove(supplier);
    return true;
  }

 private:
  ExchangeResult exchange_exact(const SupplierState& s) {
    auto it = memory_.find(s.node_id);
    if (it == memory_.end()) {
      memory_.emplace(s.node_id, Entry{s.current_value, s.version});
      add_value(s.current_value);
      return ExchangeResult::added;
    }
    if (it->second.version >= s.version) return ExchangeResult::duplicate;
    drop_value(it->second.value);
    add_value(s.current_value);
    it->second = Entry{s.current_value, s.version};
    return ExchangeResult::replaced;
  }

  std::optional<std::uint32_t> counted_version(NodeId id, std::size_t versions) const {
    for (std::size_t v = versions; v-- > 0;) {
      if (versions_.contains(version_key(id, static_cast<std::uint32_t>(v)))) return static_cast<std::uint32_t>(v);
    }
    return std::nullopt;
  }

  ExchangeResult exchange_bloom(const SupplierState& s) {
    if (s.values_by_version.size() <= s.version) {
      throw std::invalid_argument("bloom-mode exchange needs the supplier's value history");
    }
    if (versions_.contains(version_key(s.node_id, s.version))) return ExchangeResult::duplicate;
    if (seen_.contains(s.node_id)) {
      if (const auto old = counted_version(s.node_id, s.version)) {
        drop_value(s.values_by_version[*old]);
        versions_.remove(version_key(s.node_id, *old));
        versions_.insert(version_key(s.node_id, s.version));
        add_value(s.current_value);
        return ExchangeResult::replaced;
      }
    }
    seen_.insert(s.node_id);
    versions_.insert(version_key(s.node_id, s.version));
    add_value(s.current_value);
    return ExchangeResult::added;
  }

  void add_value(double v) {
    sum_ += v;
    ++count_;
    values_.insert(v);
  }

  void drop_value(double v) {
    sum_ -= v;
    --count_;
    if (auto it = values_.find(v); it != values_.end()) values_.erase(it);
  }

  MemoryMode mode_;
  double sum_ = 0.0;
  std::int64_t count_ = 0;
  std::multiset<double> values_;
  std::unordered_map<NodeId, Entry> memory_;
  CountingBloomFilter seen_;
  CountingBloomFilter versions_;
};

/// Ground truth: sum of the current values of suppliers on alive nodes.
inline double actual_aggregate(std::span<const double> values, std::span<const std::uint8_t> alive) {
  double s = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (alive[i]) s += values[i];
  }
  return s;
}

/// |estimate - actual| / |actual| for one consumer. With actual == 0 the error
/// is 0 for an exact estimate and 1 otherwise.
inline double relative_error(double estimate, double actual) {
  if (actual == 0.0) return estimate == 0.0 ? 0.0 : 1.0;
  return std::abs(estimate - actual) / std::abs(actual);
}

/// Mean relative error over the estimates of alive consumers.
inline double relative_approx_error(std::span<const double> estimates, double actual) {
  if (estimates.empty()) return 0.0;
  double acc = 0.0;
  for (double e : estimates) acc += relative_error(e, actual);
  return acc / static_cast<double>(estimates.size());
}

}  // namespace selfheal
