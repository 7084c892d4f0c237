#include "privtrans/rng.h"

#include <cmath>
#include <set>

#include <gtest/gtest.h>

namespace privtrans {
namespace {

TEST(RngTest, SameSeedSameStream) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.NextU64(), b.NextU64());
}

TEST(RngTest, PositionReplaysStream) {
  Rng a(7);
  a.NextU64();
  a.NextU64();
  Rng replay(7, a.position());
  EXPECT_EQ(a.NextU64(), replay.NextU64());
}

TEST(RngTest, CopyGivesSharedNoise) {
  Rng a(3);
  a.Uniform();
  Rng b = a;
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.Normal(), b.Normal());
}

TEST(RngTest, SplitLeavesParentUntouched) {
  Rng a(9);
  const Rng before = a;
  Rng child = a.Split(1);
  child.NextU64();
  EXPECT_EQ(a, before);
}

TEST(RngTest, SplitsDifferByTagAndSeed) {
  const Rng root(5);
  std::set<std::uint64_t> firsts;
  for (std::uint64_t tag = 0; tag < 64; ++tag) {
    Rng c = root.Split(tag);
    firsts.insert(c.NextU64());
  }
  EXPECT_EQ(firsts.size(), 64u);
  Rng x = Rng(5).Split(1), y = Rng(6).Split(1);
  EXPECT_NE(x.NextU64(), y.NextU64());
}

TEST(RngTest, UniformInUnitInterval) {
  Rng r(11);
  for (int i = 0; i < 10000; ++i) {
    const double u = r.Uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
  }
}

TEST(RngTest, NormalMoments) {
  Rng r(12);
  const int n = 200000;
  double s = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = r.Normal();
    s += z;
    sq += z * z;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.015);
}

TEST(RngTest, AddNormalMomentsAndScale) {
  Rng r(14);
  std::vector<double> v(200001, 1.0);
  r.AddNormal(v.data(), v.size(), 3.0);
  double s = 0.0, sq = 0.0;
  for (double x : v) {
    s += x - 1.0;
    sq += (x - 1.0) * (x - 1.0);
  }
  const double n = static_cast<double>(v.size());
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(sq / n, 9.0, 0.15);
  // Adjacent outputs come from one accepted pair but are uncorrelated.
  double cross = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); i += 2) cross += (v[i] - 1.0) * (v[i + 1] - 1.0);
  EXPECT_NEAR(cross / (n / 2), 0.0, 0.1);
}

TEST(RngTest, AddNormalIsReplayableAndConsumesPairs) {
  Rng a(15), b(15);
  std::vector<double> x(5, 0.0), y(5, 0.0);
  a.AddNormal(x.data(), x.size(), 1.0);
  b.AddNormal(y.data(), y.size(), 1.0);
  EXPECT_EQ(x, y);
  EXPECT_EQ(a.position(), b.position());
  EXPECT_GE(a.position(), 6u);
  EXPECT_EQ(a.position() % 2, 0u);
  const auto before = a.position();
  std::vector<double> none;
  a.AddNormal(none.data(), 0, 1.0);
  EXPECT_EQ(a.position(), before);
}

TEST(RngTest, BelowCoversRangeUniformly) {
  Rng r(13);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    const auto k = r.Below(7);
    ASSERT_LT(k, 7u);
    ++counts[k];
  }
  for (int c : counts) EXPECT_NEAR(c, n / 7.0, 5 * std::sqrt(n / 7.0));
}

}  // namespace
}  // namespace privtrans
