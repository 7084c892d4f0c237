#include "privtrans/autodiff.h"

#include <cmath>

#include <gtest/gtest.h>

#include "finite_diff.h"
#include "privtrans/errors.h"

namespace privtrans {
namespace {

using testing_util::CheckCoordinates;

Tensor RandomTensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape), 0.0);
  for (double& v : t.values()) v = scale * rng.Normal();
  return t;
}

TEST(AutodiffTest, QuadraticGradientIsParams) {
  Rng rng(1);
  ParamSet p{{"a", RandomTensor({3, 4}, rng)}, {"b", RandomTensor({5}, rng)}};
  const auto r = Gradient(
      [](Tape&, const std::vector<Var>& v) {
        return ops::Scale(ops::Add(ops::SumSquares(v[0]), ops::SumSquares(v[1])), 0.5);
      },
      p);
  for (std::size_t t = 0; t < p.size(); ++t) {
    for (std::size_t i = 0; i < p[t].value.size(); ++i) {
      EXPECT_EQ(r.grads[t][i], p[t].value[i]);
    }
  }
}

TEST(AutodiffTest, ConstantLossHasZeroGradient) {
  Rng rng(2);
  ParamSet p{{"a", RandomTensor({2, 2}, rng)}};
  const auto r = Gradient(
      [](Tape& tape, const std::vector<Var>&) {
        return tape.Constant(Tensor::Scalar(3.0));
      },
      p);
  EXPECT_DOUBLE_EQ(r.loss, 3.0);
  for (double g : r.grads[0].values()) EXPECT_EQ(g, 0.0);
}

TEST(AutodiffTest, HeavisideIsNonDifferentiable) {
  ParamSet p{{"a", Tensor({3}, 0.5)}};
  EXPECT_THROW(Gradient(
                   [](Tape&, const std::vector<Var>& v) {
                     return ops::Mean(ops::Heaviside(v[0]));
                   },
                   p),
               NonDifferentiableError);
}

TEST(AutodiffTest, HeavisideForwardIsFine) {
  Tape tape;
  Tensor x({3}, std::vector<double>{-1.0, 0.0, 2.0});
  const Var h = ops::Heaviside(tape.Leaf(x, false));
  EXPECT_EQ(tape.value(h), Tensor({3}, std::vector<double>{0.0, 0.0, 1.0}));
}

// Every op, composed into one scalar, checked against central differences.
TEST(AutodiffTest, OpsMatchFiniteDifferences) {
  Rng rng(3);
  ParamSet p{{"x", RandomTensor({2, 6, 6}, rng, 0.5)},
             {"w", RandomTensor({3, 2, 3, 3}, rng, 0.3)},
             {"b", RandomTensor({3}, rng, 0.1)},
             {"wt", RandomTensor({3, 2, 4, 4}, rng, 0.3)},
             {"bt", RandomTensor({2}, rng, 0.1)},
             {"y", RandomTensor({2, 6, 6}, rng, 0.5)}};
  auto build = [](Tape&, const std::vector<Var>& v) {
    Var h = ops::Conv2d(v[0], v[1], v[2], 2, 1);          // 3 x 3 x 3
    h = ops::LeakyRelu(h, 0.2);
    Var t = ops::ConvTranspose2d(h, v[3], v[4], 2, 1);    // 2 x 6 x 6
    t = ops::Tanh(t);
    Var cat = ops::ConcatChannels(t, v[5]);               // 4 x 6 x 6
    Var s = ops::Sigmoid(ops::Relu(ops::AddScalar(cat, 0.1)));
    Var c = ops::Clamp(s, 0.51, 0.99);
    Var l = ops::Log(ops::AddScalar(c, 0.5));
    Var d = ops::Sub(ops::Scale(l, 2.0), cat);
    return ops::Add(ops::Mean(d), ops::Add(ops::SumSquares(h),
                                           ops::MeanAbsDiff(t, v[5])));
  };
  const auto r = Gradient(build, p);
  auto eval = [&](const ParamSet& q) {
    Tape tape;
    const auto v = tape.Bind(q, false);
    return tape.value(build(tape, v))[0];
  };
  const auto fd = CheckCoordinates(eval, p, r.grads, 60, Rng(4));
  EXPECT_LE(fd.max_rel_err, 1e-4);
}

TEST(AutodiffTest, DropoutGradientUsesMask) {
  Rng rng(5);
  ParamSet p{{"x", RandomTensor({1, 4, 4}, rng)}};
  Rng z(6);
  const auto r = Gradient(
      [&](Tape&, const std::vector<Var>& v) {
        Rng local = z;
        return ops::Mean(ops::Dropout(v[0], 0.5, local));
      },
      p);
  for (double g : r.grads[0].values()) {
    EXPECT_TRUE(g == 0.0 || std::fabs(g - 2.0 / 16.0) < 1e-15);
  }
}

TEST(AutodiffTest, DropoutZeroIsIdentityAndDrawsNothing) {
  Tape tape;
  Tensor x({4}, 0.25);
  Rng rng(8);
  const Rng before = rng;
  const Var out = ops::Dropout(tape.Leaf(x, false), 0.0, rng);
  EXPECT_EQ(tape.value(out), x);
  EXPECT_EQ(rng, before);
}

TEST(AutodiffTest, ConvShapesAndMismatch) {
  Tape tape;
  Tensor x({3, 8, 8}, 0.1), w({4, 3, 4, 4}, 0.01), b({4}, 0.0);
  const Var y = ops::Conv2d(tape.Leaf(x, false), tape.Leaf(w, false),
                            tape.Leaf(b, false), 2, 1);
  EXPECT_EQ(tape.value(y).shape(), (std::vector<int>{4, 4, 4}));
  Tensor wt({4, 2, 4, 4}, 0.01), bt({2}, 0.0);
  const Var z = ops::ConvTranspose2d(y, tape.Leaf(wt, false), tape.Leaf(bt, false), 2, 1);
  EXPECT_EQ(tape.value(z).shape(), (std::vector<int>{2, 8, 8}));
  Tensor bad({4, 5, 4, 4}, 0.0);
  EXPECT_THROW(ops::Conv2d(tape.Leaf(x, false), tape.Leaf(bad, false),
                           tape.Leaf(b, false), 2, 1),
               ShapeError);
}

TEST(AutodiffTest, GradientAccumulatesOverReuse) {
  ParamSet p{{"a", Tensor({1}, 3.0)}};
  const auto r = Gradient(
      [](Tape&, const std::vector<Var>& v) { return ops::Add(v[0], ops::Scale(v[0], 2.0)); },
      p);
  EXPECT_EQ(r.grads[0][0], 3.0);
}

}  // namespace
}  // namespace privtrans
