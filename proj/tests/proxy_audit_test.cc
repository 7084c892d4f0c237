#include "privtrans/proxy_audit.h"

#include <set>

#include <gtest/gtest.h>

#include "privtrans/mia.h"

namespace privtrans {
namespace {

class Identity final : public Translator {
 public:
  ImageTensor Translate(const ImageTensor& x, Rng&) const override { return x; }
};

DatasetSplits Splits(int n_proxy, int n_test) {
  const auto samples = GenerateSyntheticTask(3, 10 + n_proxy + n_test, 8, 8);
  return MakeSplits(samples, 10, n_proxy, n_test, 4);
}

TEST(ProxyAuditSetTest, BalancedAndLabeledFromVault) {
  const auto s = Splits(8, 5);
  const auto set = BuildProxyAuditSet(s, 1);
  ASSERT_TRUE(set.has_value());
  EXPECT_EQ(set->members.size(), 5u);
  EXPECT_EQ(set->nonmembers.size(), 5u);
  std::set<std::string> proxy_ids, test_ids;
  for (const auto& p : s.proxy) proxy_ids.insert(p.id());
  for (const auto& p : s.test) test_ids.insert(p.id());
  for (const auto& m : set->members) {
    EXPECT_TRUE(proxy_ids.count(m.id()));
    EXPECT_EQ(m.target(), *s.proxy_truths.Reveal(m.id()));
  }
  for (const auto& n : set->nonmembers) EXPECT_TRUE(test_ids.count(n.id()));
}

TEST(ProxyAuditSetTest, SmallerSideLimits) {
  const auto set = BuildProxyAuditSet(Splits(3, 7), 1);
  ASSERT_TRUE(set.has_value());
  EXPECT_EQ(set->members.size(), 3u);
  EXPECT_EQ(set->nonmembers.size(), 3u);
}

TEST(ProxyAuditSetTest, NoProxyMeansNoAudit) {
  EXPECT_FALSE(BuildProxyAuditSet(Splits(0, 5), 1).has_value());
  auto s = Splits(4, 4);
  s.proxy_truths = ProxyVault{};
  EXPECT_FALSE(BuildProxyAuditSet(s, 1).has_value());
}

TEST(ProxyAuditSetTest, SeedDeterministic) {
  const auto s = Splits(9, 4);
  const auto a = BuildProxyAuditSet(s, 2), b = BuildProxyAuditSet(s, 2);
  for (std::size_t i = 0; i < a->members.size(); ++i) {
    EXPECT_EQ(a->members[i].id(), b->members[i].id());
  }
}

TEST(ProxyLeakageTest, MatchesAttackOnAuditSet) {
  const auto s = Splits(6, 6);
  Identity id;
  const auto r = ProxyLeakageAuc(id, s, 5);
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->n_per_side, 6);
  const auto want = AucRoc(AttackScores(id, *BuildProxyAuditSet(s, 5), 5));
  EXPECT_DOUBLE_EQ(r->auc, want.auc);
  EXPECT_FALSE(ProxyLeakageAuc(id, Splits(0, 6), 5).has_value());
}

}  // namespace
}  // namespace privtrans
