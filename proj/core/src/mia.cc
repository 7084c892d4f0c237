#include "privtrans/mia.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "privtrans/errors.h"

namespace privtrans {

double ReconstructionLoss(const Translator& g, const ImageTensor& x,
                          const ImageTensor& y, Rng& rng, int n_draws) {
  if (n_draws < 1) throw ConfigError("n_draws must be >= 1");
  if (x.height() != y.height() || x.width() != y.width()) {
    throw ShapeError("reconstruction loss: x and y sizes differ");
  }
  double total = 0.0;
  for (int i = 0; i < n_draws; ++i) total += MeanAbsDiff(g.Translate(x, rng), y);
  return total / n_draws;
}

std::vector<AttackRecord> AttackScores(const Translator& g,
                                       const AttackEvalSet& eval_set,
                                       std::uint64_t seed, int n_draws) {
  const Rng root = Rng(seed).Split(0x5C0E);
  std::vector<AttackRecord> records;
  records.reserve(eval_set.members.size() + eval_set.nonmembers.size());
  std::uint64_t i = 0;
  auto score = [&](const PairedSample& s, bool member) {
    Rng rng = root.Split(i++);
    records.push_back({s.id(),
                       ReconstructionLoss(g, s.input(), s.target(), rng, n_draws),
                       member});
  };
  for (const auto& s : eval_set.members) score(s, true);
  for (const auto& s : eval_set.nonmembers) score(s, false);
  return records;
}

std::vector<std::pair<std::string, bool>> ThresholdPredict(
    const std::vector<AttackRecord>& records, double tau) {
  std::vector<std::pair<std::string, bool>> out;
  out.reserve(records.size());
  for (const auto& r : records) out.emplace_back(r.sample_id, r.score < tau);
  return out;
}

RocResult AucRoc(const std::vector<AttackRecord>& records) {
  std::vector<std::pair<double, bool>> sorted;
  sorted.reserve(records.size());
  std::size_t positives = 0;
  for (const auto& r : records) {
    if (!std::isfinite(r.score)) {
      throw std::invalid_argument("attack score for " + r.sample_id +
                                  " is not finite");
    }
    sorted.emplace_back(r.score, r.is_member);
    positives += r.is_member ? 1 : 0;
  }
  const std::size_t negatives = sorted.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw std::invalid_argument("AUC needs both members and non-members");
  }
  std::sort(sorted.begin(), sorted.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  RocResult roc;
  roc.thresholds.push_back(sorted.front().first);
  roc.tpr.push_back(0.0);
  roc.fpr.push_back(0.0);
  std::size_t tp = 0, fp = 0;
  // Integer trapezoid sums keep the area exact up to one final division.
  double twice_area = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    const double score = sorted[i].first;
    std::size_t dtp = 0, dfp = 0;
    for (; i < sorted.size() && sorted[i].first == score; ++i) {
      (sorted[i].second ? dtp : dfp) += 1;
    }
    twice_area += static_cast<double>(dfp) * static_cast<double>(2 * tp + dtp);
    tp += dtp;
    fp += dfp;
    roc.thresholds.push_back(i < sorted.size() ? sorted[i].first
                                               : score + 1.0);
    roc.tpr.push_back(static_cast<double>(tp) / positives);
    roc.fpr.push_back(static_cast<double>(fp) / negatives);
  }
  roc.auc = twice_area / (2.0 * static_cast<double>(positives) *
                          static_cast<double>(negatives));
  return roc;
}

}  // namespace privtrans
