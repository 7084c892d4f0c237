#include "privtrans/proxy_audit.h"

#include <algorithm>
#include <numeric>

namespace privtrans {

namespace {

std::vector<std::size_t> Draw(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + rng.Below(n - i)]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace

std::optional<AttackEvalSet> BuildProxyAuditSet(const DatasetSplits& splits,
                                                std::uint64_t seed) {
  const std::size_t k = std::min(splits.proxy.size(), splits.test.size());
  if (k == 0) return std::nullopt;
  Rng root = Rng(seed).Split(0x9A0D);
  Rng member_rng = root.Split(0);
  Rng nonmember_rng = root.Split(1);
  AttackEvalSet set;
  for (std::size_t i : Draw(splits.proxy.size(), k, member_rng)) {
    const PairedSample& s = splits.proxy[i];
    auto truth = splits.proxy_truths.Reveal(s.id());
    if (!truth) return std::nullopt;
    set.members.emplace_back(s.id(), s.input(), std::move(*truth));
  }
  for (std::size_t i : Draw(splits.test.size(), k, nonmember_rng)) {
    set.nonmembers.push_back(splits.test[i]);
  }
  return set;
}

std::optional<ProxyAuditResult> ProxyLeakageAuc(const Translator& student,
                                                const DatasetSplits& splits,
                                                std::uint64_t seed,
                                                int n_draws) {
  auto set = BuildProxyAuditSet(splits, seed);
  if (!set) return std::nullopt;
  ProxyAuditResult r;
  r.n_per_side = static_cast<int>(set->members.size());
  r.auc = AucRoc(AttackScores(student, *set, seed, n_draws)).auc;
  return r;
}

}  // namespace privtrans
