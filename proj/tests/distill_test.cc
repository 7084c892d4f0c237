#include "privtrans/distill.h"

#include <cmath>

#include <gtest/gtest.h>

#include "privtrans/checkpoint.h"
#include "privtrans/errors.h"
#include "reference_nets.h"
#include "test_util.h"

namespace privtrans {
namespace {

using testing_util::RandomImage;
using testing_util::TinyDiscriminator;
using testing_util::TinyGenerator;

std::vector<PairedSample> Proxy(int n, std::uint64_t seed = 31) {
  std::vector<PairedSample> out;
  for (auto& s : GenerateSyntheticTask(seed, n, 8, 8)) out.push_back(s.WithoutTarget());
  return out;
}

DistillConfig TinyConfig(DistillMode mode, int epochs = 2) {
  DistillConfig c;
  c.mode = mode;
  c.epochs = epochs;
  c.disc_base_channels = 4;
  c.seed = 3;
  return c;
}

TEST(StudentLossTest, DiscriminatorLossMatchesFormula) {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto t = InitGenerator(TinyGenerator(), 100 + k);
    const auto s = InitGenerator(TinyGenerator(), 200 + k);
    const auto d = InitDiscriminator(TinyDiscriminator(), 300 + k);
    Rng data(400 + k);
    const auto x = RandomImage(data);
    const BlackBoxTeacher bb(t);
    Rng z(k), zt(k), zs(k);
    const double got = StudentDLoss(d, s, bb, x, z);
    const auto tx = reference::Generator(t, x, zt);
    const auto sx = reference::Generator(s, x, zs);
    const auto xm = reference::FromImage(x);
    const double want = reference::DLossFormula(reference::Discriminator(d, tx, xm),
                                                reference::Discriminator(d, sx, xm));
    EXPECT_NEAR(got, want, 1e-12);
  }
}

TEST(StudentLossTest, GeneratorLossMatchesFormula) {
  for (std::uint64_t k = 0; k < 10; ++k) {
    const auto t = InitGenerator(TinyGenerator(), 500 + k);
    const auto s = InitGenerator(TinyGenerator(), 600 + k);
    const auto d = InitDiscriminator(TinyDiscriminator(), 700 + k);
    Rng data(800 + k);
    const auto x = RandomImage(data);
    const BlackBoxTeacher bb(t);
    Rng z(k), zt(k), zs(k);
    const double got = StudentGLoss(d, s, bb, x, 100.0, z);
    const auto tx = reference::Generator(t, x, zt);
    const auto sx = reference::Generator(s, x, zs);
    const double want = reference::GLossFormula(
        reference::Discriminator(d, sx, reference::FromImage(x)),
        reference::MeanAbs(sx, tx), 100.0);
    EXPECT_NEAR(got, want, 1e-12 * std::max(1.0, std::fabs(want)));
  }
}

TEST(StudentLossTest, LiteralLogDTerm) {
  const auto t = InitGenerator(TinyGenerator(), 1);
  const auto s = InitGenerator(TinyGenerator(), 2);
  const auto d = InitDiscriminator(TinyDiscriminator(), 3);
  Rng data(4);
  const auto x = RandomImage(data);
  const BlackBoxTeacher bb(t);
  Rng z(5), zt(5), zs(5);
  const double got = StudentGLoss(d, s, bb, x, 10.0, z, StudentAdversarialTerm::kLogD);
  const auto tx = reference::Generator(t, x, zt);
  const auto sx = reference::Generator(s, x, zs);
  const double want =
      std::log(reference::Discriminator(d, sx, reference::FromImage(x))) +
      10.0 * reference::MeanAbs(sx, tx);
  EXPECT_NEAR(got, want, 1e-12);
}

TEST(StudentLossTest, UninformativeDiscriminator) {
  const auto t = InitGenerator(TinyGenerator(), 1);
  const auto s = InitGenerator(TinyGenerator(), 2);
  auto d = InitDiscriminator(TinyDiscriminator(), 3);
  for (auto& p : d.params) {
    for (double& v : p.value.values()) v = 0.0;
  }
  Rng data(4), z(5);
  const auto x = RandomImage(data);
  const BlackBoxTeacher bb(t);
  EXPECT_NEAR(StudentDLoss(d, s, bb, x, z), 2.0 * std::log(2.0), 1e-12);
  EXPECT_NEAR(StudentGLoss(d, s, bb, x, 0.0, z), std::log(2.0), 1e-12);
}

TEST(StudentLossTest, CopiedStudentHasZeroImitationTerm) {
  const auto t = InitGenerator(TinyGenerator(), 7);
  const auto d = InitDiscriminator(TinyDiscriminator(), 8);
  Rng data(9);
  const auto x = RandomImage(data);
  const BlackBoxTeacher bb(t);
  Rng a(10), b(10), c(10);
  EXPECT_NEAR(StudentGLoss(d, t, bb, x, 100.0, a), StudentGLoss(d, t, bb, x, 0.0, b),
              1e-15);
  // Real and fake branches see identical images, so D's two terms mirror each other.
  const double p = DiscForward(d, GenForward(t, x, c), x);
  Rng e(10);
  EXPECT_NEAR(StudentDLoss(d, t, bb, x, e), -(std::log(p) + std::log(1.0 - p)), 1e-12);
}

TEST(StudentLossTest, DmpGradientIsImitationTermGradient) {
  const auto t = InitGenerator(TinyGenerator(), 11);
  const auto s = InitGenerator(TinyGenerator(), 12);
  const auto d = InitDiscriminator(TinyDiscriminator(), 13);
  Rng data(14), zt(15);
  const auto x = RandomImage(data);
  const ImageTensor t_out = GenForward(t, x, zt);
  const double lambda = 100.0;
  auto grad = [&](int which) {
    return Gradient(
        [&](Tape& tape, const std::vector<Var>& sp) {
          Rng z(15);
          const Var xv = tape.Leaf(x.tensor(), false);
          const Var out = GeneratorGraph(tape, s.arch, sp, xv, z, true);
          const Var tv = tape.Leaf(t_out.tensor(), false);
          if (which == 2) return DmpLossGraph(out, tv);
          const auto dp = tape.Bind(d.params, false);
          return StudentGLossGraph(d.arch, dp, out, tv, xv, which == 1 ? lambda : 0.0,
                                   StudentAdversarialTerm::kNonSaturating);
        },
        s.params);
  };
  const auto full = grad(1), adv = grad(0), dmp = grad(2);
  for (std::size_t i = 0; i < full.grads.size(); ++i) {
    for (std::size_t j = 0; j < full.grads[i].size(); ++j) {
      const double imitation = full.grads[i][j] - adv.grads[i][j];
      EXPECT_NEAR(imitation, lambda * dmp.grads[i][j],
                  1e-9 * std::max(1.0, std::fabs(imitation)));
    }
  }
}

TEST(BlackBoxTeacherTest, CountsQueries) {
  const auto t = InitGenerator(TinyGenerator(), 1);
  const BlackBoxTeacher bb(t);
  Rng data(2), z(3);
  const auto x = RandomImage(data);
  EXPECT_EQ(bb.queries(), 0u);
  bb.Query(x, z);
  bb.Query(x, z);
  EXPECT_EQ(bb.queries(), 2u);
}

TEST(DistillConfigTest, Validation) {
  DistillConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.epochs = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = DistillConfig{};
  c.lambda = -1.0;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(DistillTest, RejectsEmptyOrLabeledProxy) {
  const auto t = InitGenerator(TinyGenerator(), 1);
  const BlackBoxTeacher bb(t);
  EXPECT_THROW(AkdTrain(bb, {}, TinyGenerator(), TinyConfig(DistillMode::kAkd)), ConfigError);
  const auto labeled = GenerateSyntheticTask(1, 3, 8, 8);
  EXPECT_THROW(DmpTrain(bb, labeled, TinyGenerator(), TinyConfig(DistillMode::kDmp)),
               ConfigError);
}

class DistillModeTest : public ::testing::TestWithParam<DistillMode> {};

TEST_P(DistillModeTest, TeacherFrozenNoLabelsAndQueryCount) {
  const auto t = InitGenerator(TinyGenerator(), 21);
  const std::string before = Fingerprint(t.params);
  const BlackBoxTeacher bb(t);
  const auto proxy = Proxy(5);
  const auto reads = GroundTruthReads();
  const auto r = Distill(bb, proxy, TinyGenerator(), TinyConfig(GetParam(), 3));
  EXPECT_EQ(GroundTruthReads(), reads);
  EXPECT_EQ(Fingerprint(t.params), before);
  const std::uint64_t per_sample = GetParam() == DistillMode::kAkd ? 2 : 1;
  EXPECT_EQ(bb.queries(), per_sample * 3 * proxy.size());
  ASSERT_EQ(r.log.size(), 3u);
  if (GetParam() == DistillMode::kDmp) {
    EXPECT_EQ(r.log[0].ds_loss, 0.0);
  }
}

TEST_P(DistillModeTest, Deterministic) {
  const auto t = InitGenerator(TinyGenerator(), 22);
  const BlackBoxTeacher bb(t);
  const auto proxy = Proxy(4);
  auto c = TinyConfig(GetParam());
  c.batch_size = 2;
  const auto a = Distill(bb, proxy, TinyGenerator(), c);
  const auto b = Distill(bb, proxy, TinyGenerator(), c);
  EXPECT_EQ(Fingerprint(a.student.params), Fingerprint(b.student.params));
  c.seed = 4;
  EXPECT_NE(Fingerprint(Distill(bb, proxy, TinyGenerator(), c).student.params),
            Fingerprint(a.student.params));
}

TEST_P(DistillModeTest, StudentApproachesTeacherOnHeldOutInputs) {
  // A trained-looking teacher: any fixed net works as a target function.
  const auto t = InitGenerator(TinyGenerator(), 23);
  const BlackBoxTeacher bb(t);
  const auto proxy = Proxy(16, 41);
  const auto held = Proxy(8, 42);
  auto c = TinyConfig(GetParam(), 25);
  c.lr = 1e-3;
  auto imitation = [&](const GeneratorModel& s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      Rng a(i), b(i);
      sum += MeanAbsDiff(GenForward(s, held[i].input(), a),
                         GenForward(t, held[i].input(), b));
    }
    return sum / static_cast<double>(held.size());
  };
  const auto init = InitGenerator(TinyGenerator(), Mix64(c.seed ^ 0x53545544));
  const auto r = Distill(bb, proxy, TinyGenerator(), c);
  EXPECT_LT(imitation(r.student), 0.8 * imitation(init));
}

INSTANTIATE_TEST_SUITE_P(Modes, DistillModeTest,
                         ::testing::Values(DistillMode::kAkd, DistillMode::kDmp),
                         [](const auto& info) {
                           return info.param == DistillMode::kAkd ? "Akd" : "Dmp";
                         });

}  // namespace
}  // namespace privtrans
