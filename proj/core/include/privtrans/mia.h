#ifndef PRIVTRANS_MIA_H_
#define PRIVTRANS_MIA_H_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "privtrans/dataset.h"
#include "privtrans/nets.h"

namespace privtrans {

struct AttackRecord {
  std::string sample_id;
  double score = 0.0;  // reconstruction loss, lower looks more like a member
  bool is_member = false;
};

// Point k of the curve is the classifier "member iff score < thresholds[k]".
// The first threshold is the smallest score (nothing predicted member) and
// the last sits above the largest score (everything predicted member).
struct RocResult {
  std::vector<double> thresholds;
  std::vector<double> tpr;
  std::vector<double> fpr;
  double auc = 0.5;
};

// Per-pixel mean |G(z, x) - y|, averaged over `n_draws` noise draws taken
// in sequence from `rng`.
double ReconstructionLoss(const Translator& g, const ImageTensor& x,
                          const ImageTensor& y, Rng& rng, int n_draws = 1);

// One record per sample, members first. Sample i of the concatenated list is
// scored with Rng(seed).Split(i), so results do not depend on evaluation
// order.
std::vector<AttackRecord> AttackScores(const Translator& g,
                                       const AttackEvalSet& eval_set,
                                       std::uint64_t seed, int n_draws = 1);

// (sample_id, predicted_member) with predicted_member = score < tau.
std::vector<std::pair<std::string, bool>> ThresholdPredict(
    const std::vector<AttackRecord>& records, double tau);

// Trapezoidal area under the threshold sweep; equal to the Mann-Whitney
// probability that a member scores below a non-member, ties counted half.
// Throws std::invalid_argument unless both classes are present.
RocResult AucRoc(const std::vector<AttackRecord>& records);

}  // namespace privtrans

#endif  // PRIVTRANS_MIA_H_
