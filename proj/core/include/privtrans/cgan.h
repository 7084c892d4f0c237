#ifndef PRIVTRANS_CGAN_H_
#define PRIVTRANS_CGAN_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "privtrans/adam.h"
#include "privtrans/dataset.h"
#include "privtrans/nets.h"

namespace privtrans {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 1;
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double lambda_l1 = 100.0;
  std::uint64_t seed = 0;
  int disc_base_channels = 16;

  void Validate() const;
  AdamConfig adam() const { return {lr, beta1, beta2, 1e-8}; }
};

struct EpochLog {
  int epoch = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  // Mean |G(z,x) - target| seen by the generator step.
  double l1 = 0.0;
};

struct TrainResult {
  GeneratorModel generator;
  std::vector<EpochLog> log;
};

// -[log D(real, x) + log(1 - D(fake, x))], as a one-element node.
Var DiscriminatorLossGraph(const DiscriminatorArch& arch,
                           const std::vector<Var>& d_params, Var real, Var fake,
                           Var x);
// -log D(fake, x) + lambda * mean|fake - target|.
Var GeneratorLossGraph(const DiscriminatorArch& arch,
                       const std::vector<Var>& d_params, Var fake, Var target,
                       Var x, double lambda);

// Scalar losses on one labeled pair; G(z, x) is drawn from `rng`.
double DLoss(const DiscriminatorModel& d, const GeneratorModel& g,
             const ImageTensor& x, const ImageTensor& y, Rng& rng);
double GLoss(const DiscriminatorModel& d, const GeneratorModel& g,
             const ImageTensor& x, const ImageTensor& y, double lambda,
             Rng& rng);

// Turns the per-example gradients of one minibatch into the update
// direction. `rng` is a stream reserved for the aggregator.
using GradientAggregator = std::function<std::vector<Tensor>(
    std::vector<std::vector<Tensor>>& per_example, Rng& rng)>;

// Sum in example order, then divide by the batch size.
std::vector<Tensor> MeanAggregate(std::vector<std::vector<Tensor>>& per_example,
                                  Rng& rng);

// Alternating cGAN training on splits.train: per minibatch one
// discriminator update, then one generator update. Throws TrainingError
// (with the epoch) on divergence.
TrainResult TrainCgan(const DatasetSplits& splits, const GeneratorArch& arch,
                      const TrainConfig& cfg,
                      const GradientAggregator& generator_aggregator,
                      const GradientAggregator& discriminator_aggregator);

// Undefended teacher training. The discriminator is dropped at the end.
TrainResult TrainRegular(const DatasetSplits& splits, const GeneratorArch& arch,
                         const TrainConfig& cfg);

}  // namespace privtrans

#endif  // PRIVTRANS_CGAN_H_
