#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "selfheal/aggregation.hpp"
#include "selfheal/rng.hpp"

using namespace selfheal;

namespace {

SupplierState sup(NodeId id, double value, std::uint32_t version) { return {id, value, version, {}}; }

AggregateState two_three_five() {
  AggregateState s;
  s.exchange(sup(0, 2.0, 0));
  s.exchange(sup(1, 3.0, 0));
  s.exchange(sup(2, 5.0, 0));
  return s;
}

}  // namespace

TEST(Exchange, AddsEachSupplierOnce) {
  auto s = two_three_five();
  EXPECT_DOUBLE_EQ(s.sum(), 10.0);
  EXPECT_EQ(s.count(), 3);
  EXPECT_EQ(s.exchange(sup(1, 3.0, 0)), ExchangeResult::duplicate);
  EXPECT_DOUBLE_EQ(s.sum(), 10.0);
  EXPECT_EQ(s.count(), 3);
}

TEST(Exchange, NewerVersionReplaces) {
  auto s = two_three_five();
  EXPECT_EQ(s.exchange(sup(1, 4.0, 1)), ExchangeResult::replaced);
  EXPECT_DOUBLE_EQ(s.sum(), 11.0);
  EXPECT_EQ(s.count(), 3);
  EXPECT_EQ(s.exchange(sup(1, 3.0, 0)), ExchangeResult::duplicate);
  EXPECT_DOUBLE_EQ(s.sum(), 11.0);
}

TEST(Rollback, RemovesOnceAndUpdatesExtrema) {
  auto s = two_three_five();
  EXPECT_TRUE(s.rollback(1));
  EXPECT_DOUBLE_EQ(s.sum(), 7.0);
  EXPECT_EQ(s.count(), 2);
  EXPECT_FALSE(s.rollback(1));
  EXPECT_DOUBLE_EQ(s.sum(), 7.0);
  auto t = two_three_five();
  t.rollback(0);
  EXPECT_EQ(t.min(), 3.0);
  EXPECT_EQ(t.max(), 5.0);
}

TEST(Rollback, EmptyStateHasNoExtrema) {
  AggregateState s;
  s.exchange(sup(0, 1.0, 0));
  s.rollback(0);
  EXPECT_FALSE(s.min().has_value());
  EXPECT_EQ(s.avg(), 0.0);
}

TEST(Actual, SumsAliveSuppliers) {
  const std::vector<double> v{2, 3, 5};
  EXPECT_DOUBLE_EQ(actual_aggregate(v, std::vector<std::uint8_t>{1, 1, 1}), 10.0);
  EXPECT_DOUBLE_EQ(actual_aggregate(v, std::vector<std::uint8_t>{1, 0, 1}), 7.0);
  EXPECT_DOUBLE_EQ(actual_aggregate(v, std::vector<std::uint8_t>{0, 0, 0}), 0.0);
}

TEST(RelativeError, Examples) {
  EXPECT_EQ(relative_approx_error(std::vector<double>{7, 7}, 7.0), 0.0);
  EXPECT_NEAR(relative_approx_error(std::vector<double>{10}, 7.0), 3.0 / 7.0, 1e-12);
  EXPECT_NEAR(relative_approx_error(std::vector<double>{11, 13}, 10.0), 0.2, 1e-12);
  EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
  EXPECT_EQ(relative_error(1.0, 0.0), 1.0);
  EXPECT_EQ(relative_approx_error({}, 3.0), 0.0);
}

TEST(Bloom, InsertRemoveContains) {
  CountingBloomFilter f(1000, 5, 3);
  f.insert(42);
  EXPECT_TRUE(f.contains(42));
  EXPECT_TRUE(f.remove(42));
  EXPECT_FALSE(f.contains(42));
  EXPECT_TRUE(f.all_zero());
  EXPECT_FALSE(f.remove(42));
  EXPECT_EQ(f.rejected_removes(), 1u);
  EXPECT_TRUE(f.all_zero());
  EXPECT_THROW(CountingBloomFilter(0, 1), std::invalid_argument);
  EXPECT_THROW(CountingBloomFilter(1, 0), std::invalid_argument);
}

TEST(Bloom, EmpiricalFalsePositiveRate) {
  const double theory = CountingBloomFilter::theoretical_fpr(10000, 7, 1000);
  EXPECT_NEAR(theory, 0.00819, 5e-5);
  CountingBloomFilter f(10000, 7, 11);
  Rng rng(5);
  std::vector<std::uint64_t> in(1000);
  for (auto& x : in) {
    x = rng.next() | 1ULL;
    f.insert(x);
  }
  for (auto x : in) ASSERT_TRUE(f.contains(x));
  int fp = 0;
  for (int i = 0; i < 100000; ++i) fp += f.contains(rng.next() & ~1ULL);
  // 100k Bernoulli draws at p=0.0082: sd ~ 2.9e-4, allow ~6 sd.
  EXPECT_NEAR(fp / 100000.0, theory, 0.0018);
}

// Random interleavings of exchanges, version bumps and rollbacks against a
// brute-force map of what the consumer should hold.
TEST(ExactMode, MatchesBruteForceUnderInterleavings) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const std::size_t n = 30;
    std::vector<double> value(n);
    std::vector<std::uint32_t> version(n, 0);
    for (auto& v : value) v = rng.uniform() * 10.0;
    AggregateState s;
    std::map<NodeId, double> held;
    for (int op = 0; op < 1000; ++op) {
      const auto id = static_cast<NodeId>(rng.below(n));
      const auto kind = rng.below(10);
      if (kind < 6) {
        s.exchange(sup(id, value[id], version[id]));
        held[id] = value[id];
      } else if (kind < 8) {
        ++version[id];
        value[id] = rng.uniform() * 10.0;
      } else {
        s.rollback(id);
        held.erase(id);
      }
      double sum = 0;
      for (const auto& [k, v] : held) sum += v;
      ASSERT_NEAR(s.sum(), sum, 1e-9) << "seed " << seed << " op " << op;
      ASSERT_EQ(s.count(), static_cast<std::int64_t>(held.size()));
      if (held.empty()) {
        ASSERT_FALSE(s.max().has_value());
      } else {
        const auto [lo, hi] = std::minmax_element(held.begin(), held.end(),
                                                  [](auto& a, auto& b) { return a.second < b.second; });
        ASSERT_EQ(*s.min(), lo->second);
        ASSERT_EQ(*s.max(), hi->second);
      }
    }
    // Full propagation with no failures: every supplier at its latest version.
    for (NodeId id = 0; id < n; ++id) s.exchange(sup(id, value[id], version[id]));
    const std::vector<std::uint8_t> alive(n, 1);
    EXPECT_NEAR(s.sum(), actual_aggregate(value, alive), 1e-9);
  }
}

TEST(ExactMode, ExchangeIsIdempotentAtFixedVersion) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = two_three_five();
    const auto s1 = sup(static_cast<NodeId>(rng.below(6)), rng.uniform(), 1);
    s.exchange(s1);
    const double sum = s.sum();
    const auto count = s.count();
    EXPECT_EQ(s.exchange(s1), ExchangeResult::duplicate);
    EXPECT_EQ(s.sum(), sum);
    EXPECT_EQ(s.count(), count);
  }
}

TEST(BloomMode, NeedsValueHistory) {
  AggregateState s(MemoryMode::bloom);
  EXPECT_THROW(s.exchange(sup(0, 1.0, 0)), std::invalid_argument);
}

TEST(BloomMode, ReplaceAndRollback) {
  AggregateState s(MemoryMode::bloom);
  const std::vector<double> hist{3.0, 4.0};
  EXPECT_EQ(s.exchange({1, 3.0, 0, hist}), ExchangeResult::added);
  EXPECT_EQ(s.exchange({1, 3.0, 0, hist}), ExchangeResult::duplicate);
  EXPECT_EQ(s.exchange({1, 4.0, 1, hist}), ExchangeResult::replaced);
  EXPECT_DOUBLE_EQ(s.sum(), 4.0);
  EXPECT_TRUE(s.rollback(1, hist));
  EXPECT_DOUBLE_EQ(s.sum(), 0.0);
  EXPECT_FALSE(s.rollback(1, hist));
}

// Bloom consumers diverge from exact ones only on an operation where one of
// the filters answered a probe differently from the exact memory.
TEST(BloomMode, DivergesOnlyAfterFilterFalsePositive) {
  std::size_t diverged_runs = 0, fp_runs = 0;
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    Rng rng(seed);
    const std::size_t n = 60;
    const std::uint32_t versions = 8;
    std::vector<std::vector<double>> hist(n, std::vector<double>(versions));
    for (auto& h : hist)
      for (auto& v : h) v = rng.uniform() * 5.0;
    std::vector<std::uint32_t> version(n, 0);
    AggregateState exact;
    AggregateState bloom(MemoryMode::bloom, BloomParams{96, 3, seed});

    // Does any probe the Bloom consumer could make for `id` disagree with exact memory?
    auto filter_lies = [&](NodeId id) {
      const auto it = exact.memory().find(id);
      const bool held = it != exact.memory().end();
      if (bloom.seen_filter().contains(id) != held) return true;
      for (std::uint32_t v = 0; v < versions; ++v) {
        const bool counted = held && it->second.version == v;
        if (bloom.version_filter().contains(AggregateState::version_key(id, v)) != counted) return true;
      }
      return false;
    };

    std::size_t fp_ops = 0;
    bool diverged = false;
    for (int op = 0; op < 600; ++op) {
      const auto id = static_cast<NodeId>(rng.below(n));
      const auto kind = rng.below(10);
      const bool lies = !diverged && filter_lies(id);
      fp_ops += lies;
      if (kind < 6) {
        const SupplierState s{id, hist[id][version[id]], version[id], hist[id]};
        exact.exchange(s);
        bloom.exchange(s);
      } else if (kind < 8) {
        if (version[id] + 1 < versions) ++version[id];
      } else {
        exact.rollback(id);
        bloom.rollback(id, hist[id]);
      }
      if (!diverged && std::abs(exact.sum() - bloom.sum()) > 1e-9) {
        diverged = true;
        EXPECT_TRUE(lies) << "seed " << seed << " op " << op << ": divergence without a filter false positive";
      }
    }
    diverged_runs += diverged;
    fp_runs += fp_ops > 0;
  }
  EXPECT_LE(diverged_runs, fp_runs);
  EXPECT_GT(diverged_runs, 0u);  // the tiny filter must actually exercise false positives
}

TEST(BloomMode, LargeFilterMatchesExact) {
  Rng rng(8);
  const std::size_t n = 50;
  std::vector<std::vector<double>> hist(n, std::vector<double>(4));
  for (auto& h : hist)
    for (auto& v : h) v = rng.uniform();
  AggregateState exact;
  AggregateState bloom(MemoryMode::bloom, BloomParams{1 << 16, 7, 1});
  for (std::uint32_t v = 0; v < 4; ++v) {
    for (NodeId id = 0; id < n; ++id) {
      const SupplierState s{id, hist[id][v], v, hist[id]};
      ASSERT_EQ(exact.exchange(s), bloom.exchange(s));
    }
  }
  for (NodeId id = 0; id < n; id += 3) ASSERT_EQ(exact.rollback(id), bloom.rollback(id, hist[id]));
  EXPECT_NEAR(exact.sum(), bloom.sum(), 1e-9);
  EXPECT_EQ(exact.count(), bloom.count());
}
