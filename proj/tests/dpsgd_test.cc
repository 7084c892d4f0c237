#include "privtrans/dpsgd.h"

#include <cmath>

#include <gtest/gtest.h>

#include "privtrans/checkpoint.h"
#include "privtrans/errors.h"
#include "test_util.h"

namespace privtrans {
namespace {

using testing_util::TinyGenerator;

std::vector<Tensor> Grad(std::vector<double> a, std::vector<double> b) {
  const int na = static_cast<int>(a.size()), nb = static_cast<int>(b.size());
  return {Tensor({na}, std::move(a)), Tensor({nb}, std::move(b))};
}

TEST(DpConfigTest, Validation) {
  DpConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.clip_norm = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = DpConfig{};
  c.sigma = -0.1;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(DpsgdTest, GradientNormSpansTensors) {
  EXPECT_DOUBLE_EQ(GradientNorm(Grad({3.0}, {4.0})), 5.0);
  EXPECT_DOUBLE_EQ(GradientNorm({}), 0.0);
}

TEST(DpsgdTest, ClipScalesOnlyLargeGradients) {
  std::vector<std::vector<Tensor>> g = {Grad({3.0}, {4.0}), Grad({0.3}, {0.4})};
  const auto c = ClipPerExample(g, 1.0);
  EXPECT_NEAR(c[0][0][0], 0.6, 1e-15);
  EXPECT_NEAR(c[0][1][0], 0.8, 1e-15);
  EXPECT_EQ(c[1][0][0], 0.3);
  EXPECT_EQ(c[1][1][0], 0.4);
}

TEST(DpsgdTest, ClippedNormsNeverExceedBound) {
  Rng rng(1);
  std::vector<std::vector<Tensor>> g;
  for (int i = 0; i < 50; ++i) {
    std::vector<double> a(7), b(3);
    const double scale = std::exp(6.0 * rng.Uniform() - 3.0);
    for (double& v : a) v = scale * rng.Normal();
    for (double& v : b) v = scale * rng.Normal();
    g.push_back(Grad(a, b));
  }
  for (double bound : {0.01, 0.5, 2.0}) {
    const auto c = ClipPerExample(g, bound);
    for (std::size_t i = 0; i < c.size(); ++i) {
      EXPECT_LE(GradientNorm(c[i]), bound * (1.0 + 1e-12));
      EXPECT_NEAR(GradientNorm(c[i]), std::min(bound, GradientNorm(g[i])), 1e-12 * bound);
    }
  }
}

TEST(DpsgdTest, ZeroSigmaDrawsNothing) {
  std::vector<std::vector<Tensor>> g = {Grad({1.0}, {2.0}), Grad({3.0}, {4.0})};
  Rng rng(5);
  const Rng before = rng;
  const auto m = NoisyAggregate(g, 0.0, 1.0, rng);
  EXPECT_EQ(rng, before);
  EXPECT_EQ(m[0][0], 2.0);
  EXPECT_EQ(m[1][0], 3.0);
}

TEST(DpsgdTest, NoiseStdIsSigmaTimesClipOverBatch) {
  // 4 examples of zero gradient; the aggregate is pure noise.
  const double sigma = 2.0, clip = 0.5;
  const int n = 20000;
  std::vector<std::vector<Tensor>> g(4, {Tensor({n}, 0.0)});
  Rng rng(9);
  const auto m = NoisyAggregate(g, sigma, clip, rng);
  double s = 0.0, ss = 0.0;
  for (double v : m[0].values()) {
    s += v;
    ss += v * v;
  }
  const double mean = s / n, sd = std::sqrt(ss / n - mean * mean);
  const double want = sigma * clip / 4.0;
  EXPECT_NEAR(mean, 0.0, 5.0 * want / std::sqrt(n));
  EXPECT_NEAR(sd, want, 0.03 * want);
}

TEST(DpsgdTest, AggregatorClipsBeforeAveraging) {
  std::vector<std::vector<Tensor>> g = {Grad({30.0}, {40.0}), Grad({0.0}, {0.0})};
  DpConfig dp;
  dp.clip_norm = 1.0;
  Rng rng;
  const auto m = DpAggregator(dp)(g, rng);
  EXPECT_NEAR(m[0][0], 0.3, 1e-15);
  EXPECT_NEAR(m[1][0], 0.4, 1e-15);
}

TEST(DpsgdTest, HugeClipZeroNoiseMatchesRegularTraining) {
  const auto samples = GenerateSyntheticTask(2, 10, 8, 8);
  const auto splits = MakeSplits(samples, 6, 0, 4, 1);
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 2;
  c.disc_base_channels = 4;
  c.seed = 4;
  DpConfig dp;
  dp.clip_norm = 1e9;
  dp.sigma = 0.0;
  const auto reg = TrainRegular(splits, TinyGenerator(), c);
  const auto priv = TrainDpsgd(splits, TinyGenerator(), c, dp);
  ASSERT_EQ(reg.generator.params.size(), priv.generator.params.size());
  for (std::size_t i = 0; i < reg.generator.params.size(); ++i) {
    EXPECT_EQ(reg.generator.params[i].value, priv.generator.params[i].value);
  }
}

TEST(DpsgdTest, NoiseChangesTrainedModel) {
  const auto samples = GenerateSyntheticTask(2, 10, 8, 8);
  const auto splits = MakeSplits(samples, 6, 0, 4, 1);
  TrainConfig c;
  c.epochs = 1;
  c.disc_base_channels = 4;
  DpConfig dp;
  dp.sigma = 1.0;
  const auto a = TrainDpsgd(splits, TinyGenerator(), c, dp);
  const auto b = TrainDpsgd(splits, TinyGenerator(), c, dp);
  EXPECT_EQ(Fingerprint(a.generator.params), Fingerprint(b.generator.params));
  EXPECT_NE(Fingerprint(a.generator.params),
            Fingerprint(TrainRegular(splits, TinyGenerator(), c).generator.params));
  dp.applies_to = DpTarget::kDiscriminator;
  EXPECT_NE(Fingerprint(TrainDpsgd(splits, TinyGenerator(), c, dp).generator.params),
            Fingerprint(a.generator.params));
}

}  // namespace
}  // namespace privtrans
