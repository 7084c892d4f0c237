#ifndef PRIVTRANS_PROXY_AUDIT_H_
#define PRIVTRANS_PROXY_AUDIT_H_

#include <cstdint>
#include <optional>

#include "privtrans/dataset.h"
#include "privtrans/mia.h"
#include "privtrans/nets.h"

namespace privtrans {

// Members are proxy samples re-paired with their vaulted ground truths;
// non-members are test samples. Both sides hold min(|proxy|, |test|)
// samples drawn without replacement. Returns nullopt when there is nothing
// to audit: no proxy samples, no test samples, or a missing vault entry.
std::optional<AttackEvalSet> BuildProxyAuditSet(const DatasetSplits& splits,
                                                std::uint64_t seed);

struct ProxyAuditResult {
  double auc = 0.5;
  int n_per_side = 0;
};

// The reconstruction-loss attack from mia.h run against `student` on the
// proxy audit set. nullopt means the audit was skipped.
std::optional<ProxyAuditResult> ProxyLeakageAuc(const Translator& student,
                                                const DatasetSplits& splits,
                                                std::uint64_t seed,
                                                int n_draws = 1);

}  // namespace privtrans

#endif  // PRIVTRANS_PROXY_AUDIT_H_
