#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "selfheal/rng.hpp"

using namespace selfheal;

TEST(Rng, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next(), b.next());
}

TEST(Rng, DerivedStreamsDiffer) {
  EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
  EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}

TEST(Rng, BelowStaysInRangeAndCoversIt) {
  Rng r(3);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) {
    const auto x = r.below(7);
    ASSERT_LT(x, 7u);
    ++hits[x];
  }
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Rng, ShuffleIsAPermutation) {
  Rng r(9);
  std::vector<int> v(100);
  std::iota(v.begin(), v.end(), 0);
  r.shuffle(std::span<int>(v));
  auto s = v;
  std::sort(s.begin(), s.end());
  for (int i = 0; i < 100; ++i) EXPECT_EQ(s[i], i);
  EXPECT_FALSE(std::is_sorted(v.begin(), v.end()));
}

TEST(Rng, UniformAndNormalMoments) {
  Rng r(11);
  double su = 0, sn = 0, sn2 = 0;
  const int N = 200000;
  for (int i = 0; i < N; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    su += u;
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
  }
  EXPECT_NEAR(su / N, 0.5, 0.01);
  EXPECT_NEAR(sn / N, 0.0, 0.01);
  EXPECT_NEAR(sn2 / N, 1.0, 0.02);
}
