#include "privtrans/cgan.h"

#include <cmath>
#include <numeric>

#include "privtrans/errors.h"

namespace privtrans {

namespace {

std::vector<std::size_t> EpochOrder(std::size_t n, std::uint64_t seed,
                                    int epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).Split(0xE70C).Split(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.Below(i)]);
  return order;
}

}  // namespace

void TrainConfig::Validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (lambda_l1 < 0.0) throw ConfigError("lambda_l1 must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("Adam betas must be in [0, 1)");
  }
}

Var DiscriminatorLossGraph(const DiscriminatorArch& arch,
                           const std::vector<Var>& d_params, Var real, Var fake,
                           Var x) {
  Tape& tape = *x.tape;
  const Var p_real = DiscriminatorGraph(tape, arch, d_params, real, x);
  const Var p_fake = DiscriminatorGraph(tape, arch, d_params, fake, x);
  const Var log_real = ops::Log(p_real);
  const Var log_not_fake = ops::Log(ops::AddScalar(ops::Scale(p_fake, -1.0), 1.0));
  return ops::Scale(ops::Add(log_real, log_not_fake), -1.0);
}

Var GeneratorLossGraph(const DiscriminatorArch& arch,
                       const std::vector<Var>& d_params, Var fake, Var target,
                       Var x, double lambda) {
  Tape& tape = *x.tape;
  const Var p_fake = DiscriminatorGraph(tape, arch, d_params, fake, x);
  const Var adversarial = ops::Scale(ops::Log(p_fake), -1.0);
  if (lambda == 0.0) return adversarial;
  return ops::Add(adversarial,
                  ops::Scale(ops::MeanAbsDiff(fake, target), lambda));
}

double DLoss(const DiscriminatorModel& d, const GeneratorModel& g,
             const ImageTensor& x, const ImageTensor& y, Rng& rng) {
  Tape tape;
  const auto gp = tape.Bind(g.params, false);
  const auto dp = tape.Bind(d.params, false);
  const Var xv = tape.Leaf(x.tensor(), false);
  const Var fake = GeneratorGraph(tape, g.arch, gp, xv, rng, g.dropout_active);
  const Var loss = DiscriminatorLossGraph(d.arch, dp, tape.Leaf(y.tensor(), false),
                                          fake, xv);
  return tape.value(loss)[0];
}

double GLoss(const DiscriminatorModel& d, const GeneratorModel& g,
             const ImageTensor& x, const ImageTensor& y, double lambda,
             Rng& rng) {
  Tape tape;
  const auto gp = tape.Bind(g.params, false);
  const auto dp = tape.Bind(d.params, false);
  const Var xv = tape.Leaf(x.tensor(), false);
  const Var fake = GeneratorGraph(tape, g.arch, gp, xv, rng, g.dropout_active);
  const Var loss = GeneratorLossGraph(d.arch, dp, fake,
                                      tape.Leaf(y.tensor(), false), xv, lambda);
  return tape.value(loss)[0];
}

std::vector<Tensor> MeanAggregate(std::vector<std::vector<Tensor>>& per_example,
                                  Rng&) {
  std::vector<Tensor> sum = std::move(per_example.front());
  for (std::size_t e = 1; e < per_example.size(); ++e) {
    for (std::size_t k = 0; k < sum.size(); ++k) {
      for (std::size_t i = 0; i < sum[k].size(); ++i) {
        sum[k][i] += per_example[e][k][i];
      }
    }
  }
  if (per_example.size() > 1) {
    const double inv = 1.0 / static_cast<double>(per_example.size());
    for (auto& t : sum) {
      for (double& v : t.values()) v *= inv;
    }
  }
  return sum;
}

TrainResult TrainCgan(const DatasetSplits& splits, const GeneratorArch& arch,
                      const TrainConfig& cfg,
                      const GradientAggregator& generator_aggregator,
                      const GradientAggregator& discriminator_aggregator) {
  cfg.Validate();
  if (splits.train.empty()) throw ConfigError("train split is empty");
  GeneratorModel g = InitGenerator(arch, Mix64(cfg.seed ^ 0x47454E));
  DiscriminatorModel d = InitDiscriminator(
      DiscriminatorFor(arch, cfg.disc_base_channels), Mix64(cfg.seed ^ 0x444953));
  Adam g_opt(g.params, cfg.adam());
  Adam d_opt(d.params, cfg.adam());
  const Rng step_root = Rng(cfg.seed).Split(0x57E9);

  TrainResult result;
  std::uint64_t step = 0;
  const std::size_t n = splits.train.size();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochLog log{epoch, 0.0, 0.0, 0.0};
    const auto order = EpochOrder(n, cfg.seed, epoch);
    try {
      for (std::size_t start = 0; start < n; start += cfg.batch_size, ++step) {
        const std::size_t end = std::min(n, start + cfg.batch_size);
        const Rng step_rng = step_root.Split(step);

        std::vector<std::vector<Tensor>> d_grads;
        for (std::size_t b = start; b < end; ++b) {
          const PairedSample& s = splits.train[order[b]];
          Rng z = step_rng.Split(2 * (b - start));
          const ImageTensor& y = s.target();
          auto r = Gradient(
              [&](Tape& tape, const std::vector<Var>& dp) {
                const auto gp = tape.Bind(g.params, false);
                const Var x = tape.Leaf(s.input().tensor(), false);
                const Var fake = GeneratorGraph(tape, g.arch, gp, x, z, true);
                return DiscriminatorLossGraph(d.arch, dp,
                                              tape.Leaf(y.tensor(), false),
                                              fake, x);
              },
              d.params);
          log.d_loss += r.loss;
          d_grads.push_back(std::move(r.grads));
        }
        Rng d_noise = step_rng.Split(0xD0);
        d_opt.Step(d.params, discriminator_aggregator(d_grads, d_noise));

        std::vector<std::vector<Tensor>> g_grads;
        for (std::size_t b = start; b < end; ++b) {
          const PairedSample& s = splits.train[order[b]];
          Rng z = step_rng.Split(2 * (b - start) + 1);
          const ImageTensor& y = s.target();
          double l1 = 0.0;
          auto r = Gradient(
              [&](Tape& tape, const std::vector<Var>& gp) {
                const auto dp = tape.Bind(d.params, false);
                const Var x = tape.Leaf(s.input().tensor(), false);
                const Var target = tape.Leaf(y.tensor(), false);
                const Var fake = GeneratorGraph(tape, g.arch, gp, x, z, true);
                l1 = tape.value(ops::MeanAbsDiff(fake, target))[0];
                return GeneratorLossGraph(d.arch, dp, fake, target, x,
                                          cfg.lambda_l1);
              },
              g.params);
          log.g_loss += r.loss;
          log.l1 += l1;
          g_grads.push_back(std::move(r.grads));
        }
        Rng g_noise = step_rng.Split(0x60);
        g_opt.Step(g.params, generator_aggregator(g_grads, g_noise));
      }
    } catch (const NumericError& e) {
      throw TrainingError(epoch, "training diverged in epoch " +
                                     std::to_string(epoch) + ": " + e.what());
    }
    log.d_loss /= static_cast<double>(n);
    log.g_loss /= static_cast<double>(n);
    log.l1 /= static_cast<double>(n);
    if (!std::isfinite(log.d_loss) || !std::isfinite(log.g_loss)) {
      throw TrainingError(epoch, "loss became non-finite in epoch " +
                                     std::to_string(epoch));
    }
    result.log.push_back(log);
  }
  result.generator = std::move(g);
  return result;
}

TrainResult TrainRegular(const DatasetSplits& splits, const GeneratorArch& arch,
                         const TrainConfig& cfg) {
  return TrainCgan(splits, arch, cfg, MeanAggregate, MeanAggregate);
}

}  // namespace privtrans
