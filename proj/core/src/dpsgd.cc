#include "privtrans/dpsgd.h"

#include <cmath>
#include <stdexcept>

#include "privtrans/errors.h"

namespace privtrans {

void DpConfig::Validate() const {
  if (!(clip_norm > 0.0)) throw ConfigError("dp_sgd clip_norm must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("dp_sgd sigma must be >= 0");
}

double GradientNorm(const std::vector<Tensor>& grad) {
  double sq = 0.0;
  for (const Tensor& t : grad) {
    for (double v : t.values()) sq += v * v;
  }
  return std::sqrt(sq);
}

std::vector<std::vector<Tensor>> ClipPerExample(
    std::vector<std::vector<Tensor>> grads, double clip_norm) {
  for (auto& g : grads) {
    const double norm = GradientNorm(g);
    if (norm <= clip_norm) continue;
    const double scale = clip_norm / norm;
    for (Tensor& t : g) {
      for (double& v : t.values()) v *= scale;
    }
  }
  return grads;
}

std::vector<Tensor> NoisyAggregate(std::vector<std::vector<Tensor>>& clipped,
                                   double sigma, double clip_norm, Rng& rng) {
  if (clipped.empty()) throw std::invalid_argument("no gradients to aggregate");
  const double batch = static_cast<double>(clipped.size());
  std::vector<Tensor> out = MeanAggregate(clipped, rng);
  if (sigma == 0.0) return out;
  const double std_dev = sigma * clip_norm / batch;
  for (Tensor& t : out) rng.AddNormal(t.data(), t.size(), std_dev);
  return out;
}

GradientAggregator DpAggregator(const DpConfig& dp) {
  return [dp](std::vector<std::vector<Tensor>>& per_example, Rng& rng) {
    auto clipped = ClipPerExample(std::move(per_example), dp.clip_norm);
    return NoisyAggregate(clipped, dp.sigma, dp.clip_norm, rng);
  };
}

TrainResult TrainDpsgd(const DatasetSplits& splits, const GeneratorArch& arch,
                       const TrainConfig& cfg, const DpConfig& dp) {
  dp.Validate();
  const GradientAggregator noisy = DpAggregator(dp);
  const bool gen = dp.applies_to != DpTarget::kDiscriminator;
  const bool disc = dp.applies_to != DpTarget::kGenerator;
  return TrainCgan(splits, arch, cfg,
                   gen ? noisy : GradientAggregator(MeanAggregate),
                   disc ? noisy : GradientAggregator(MeanAggregate));
}

}  // namespace privtrans
