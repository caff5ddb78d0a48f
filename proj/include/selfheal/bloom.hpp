#pragma once

// Counting Bloom filter over 64-bit keys. Counters make removal possible,
// which rollback needs; double hashing derives the k probe positions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "selfheal/rng.hpp"

namespace selfheal {

class CountingBloomFilter {
 public:
  using Counter = std::uint16_t;

  CountingBloomFilter(std::size_t m_bits, std::size_t k_hashes, std::uint64_t salt = 0)
      : counters_(m_bits, 0), k_(k_hashes), salt_(salt) {
    if (m_bits == 0) throw std::invalid_argument("CountingBloomFilter: m_bits must be > 0");
    if (k_hashes == 0) throw std::invalid_argument("CountingBloomFilter: k_hashes must be > 0");
  }

  void insert(std::uint64_t item) {
    for_each_slot(item, [&](std::size_t i) {
      if (counters_[i] < std::numeric_limits<Counter>::max()) ++counters_[i];
    });
  }

  /// Decrements the item's counters. An item that cannot be present (some
  /// counter is zero) is rejected, counted, and leaves the filter untouched.
  bool remove(std::uint64_t item) {
    if (!contains(item)) {
      ++rejected_removes_;
      return false;
    }
    for_each_slot(item, [&](std::size_t i) { --counters_[i]; });
    return true;
  }

  bool contains(std::uint64_t item) const {
    bool all = true;
    for_each_slot(item, [&](std::size_t i) { all = all && counters_[i] > 0; });
    return all;
  }

  bool all_zero() const {
    return std::all_of(counters_.begin(), counters_.end(), [](Counter c) { return c == 0; });
  }

  std::size_t m_bits() const { return counters_.size(); }
  std::size_t k_hashes() const { return k_; }
  std::uint64_t rejected_removes() const { return rejected_removes_; }

  /// (1 - e^{-k n / m})^k
  static double theoretical_fpr(std::size_t m_bits, std::size_t k_hashes, std::size_t inserted) {
    const double k = static_cast<double>(k_hashes);
    return std::pow(1.0 - std::exp(-k * static_cast<double>(inserted) / static_cast<double>(m_bits)), k);
  }

 private:
  template <class Fn>
  void for_each_slot(std::uint64_t item, Fn&& fn) const {
    const std::uint64_t h1 = splitmix64(item ^ salt_);
    const std::uint64_t h2 = splitmix64(h1 ^ 0x5851F42D4C957F2DULL) | 1ULL;
    const std::uint64_t m = counters_.size();
    for (std::size_t i = 0; i < k_; ++i) fn(static_cast<std::size_t>((h1 + i * h2) % m));
  }

  std::vector<Counter> counters_;
  std::size_t k_;
  std::uint64_t salt_;
  std::uint64_t rejected_removes_ = 0;
};

}  // namespace selfheal
