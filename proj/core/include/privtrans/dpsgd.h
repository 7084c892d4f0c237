#ifndef PRIVTRANS_DPSGD_H_
#define PRIVTRANS_DPSGD_H_

#include <vector>

#include "privtrans/cgan.h"

namespace privtrans {

enum class DpTarget { kGenerator, kDiscriminator, kBoth };

struct DpConfig {
  double clip_norm = 1.0;
  double sigma = 0.0;
  DpTarget applies_to = DpTarget::kBoth;

  void Validate() const;
};

// l2 norm of one example's gradient, taken over every parameter tensor.
double GradientNorm(const std::vector<Tensor>& grad);

// Scales each example's gradient by min(1, C / ||g||). Norms at or below C
// pass through untouched.
std::vector<std::vector<Tensor>> ClipPerExample(
    std::vector<std::vector<Tensor>> grads, double clip_norm);

// Mean of the clipped gradients plus N(0, (sigma * C / B)^2) per
// coordinate. With sigma = 0 no noise is drawn and the result equals
// MeanAggregate bit for bit.
std::vector<Tensor> NoisyAggregate(std::vector<std::vector<Tensor>>& clipped,
                                   double sigma, double clip_norm, Rng& rng);

// GradientAggregator that clips then noises.
GradientAggregator DpAggregator(const DpConfig& dp);

// Regular cGAN training with the DP aggregator on the networks selected by
// dp.applies_to.
TrainResult TrainDpsgd(const DatasetSplits& splits, const GeneratorArch& arch,
                       const TrainConfig& cfg, const DpConfig& dp);

}  // namespace privtrans

#endif  // PRIVTRANS_DPSGD_H_
