#include "privtrans/checkpoint.h"

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "privtrans/errors.h"
#include "test_util.h"

namespace privtrans {
namespace {

using testing_util::TempDir;
using testing_util::TinyDiscriminator;
using testing_util::TinyGenerator;

TEST(CheckpointTest, GeneratorRoundTripBitExact) {
  TempDir dir("ckpt_g");
  const GeneratorModel g = InitGenerator(TinyGenerator(), 3);
  SaveGenerator(g, dir.path());
  const GeneratorModel back = LoadGenerator(dir.path());
  EXPECT_EQ(back.arch, g.arch);
  ASSERT_EQ(back.params.size(), g.params.size());
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    EXPECT_EQ(back.params[i].name, g.params[i].name);
    EXPECT_EQ(back.params[i].value, g.params[i].value);
  }
  EXPECT_EQ(Fingerprint(back.params), Fingerprint(g.params));
}

TEST(CheckpointTest, RoundTripPreservesOutputs) {
  TempDir dir("ckpt_out");
  GeneratorModel g = InitGenerator(TinyGenerator(), 4);
  SaveGenerator(g, dir.path());
  const GeneratorModel back = LoadGenerator(dir.path());
  Rng r(9);
  const ImageTensor x = testing_util::RandomImage(r);
  Rng a(1), b(1);
  EXPECT_EQ(GenForward(g, x, a), GenForward(back, x, b));
}

TEST(CheckpointTest, Float32WithinSinglePrecision) {
  TempDir dir("ckpt_f32");
  const GeneratorModel g = InitGenerator(TinyGenerator(), 5);
  SaveGenerator(g, dir.path(), StorageType::kFloat32);
  const GeneratorModel back = LoadGenerator(dir.path());
  for (std::size_t i = 0; i < g.params.size(); ++i) {
    for (std::size_t j = 0; j < g.params[i].value.size(); ++j) {
      EXPECT_EQ(back.params[i].value[j],
                static_cast<double>(static_cast<float>(g.params[i].value[j])));
    }
  }
}

TEST(CheckpointTest, DiscriminatorRoundTrip) {
  TempDir dir("ckpt_d");
  const DiscriminatorModel d = InitDiscriminator(TinyDiscriminator(), 6);
  SaveDiscriminator(d, dir.path());
  const DiscriminatorModel back = LoadDiscriminator(dir.path());
  EXPECT_EQ(back.arch, d.arch);
  EXPECT_EQ(Fingerprint(back.params), Fingerprint(d.params));
}

TEST(CheckpointTest, KindMismatchRejected) {
  TempDir dir("ckpt_kind");
  SaveDiscriminator(InitDiscriminator(TinyDiscriminator(), 6), dir.path());
  EXPECT_THROW(LoadGenerator(dir.path()), IngestionError);
}

TEST(CheckpointTest, TruncatedTensorRejected) {
  TempDir dir("ckpt_trunc");
  SaveGenerator(InitGenerator(TinyGenerator(), 3), dir.path());
  std::ofstream(dir.path() / "t000.bin", std::ios::binary | std::ios::trunc) << "xx";
  EXPECT_THROW(LoadGenerator(dir.path()), IngestionError);
}

TEST(CheckpointTest, MissingDirectoryRejected) {
  EXPECT_THROW(LoadGenerator("/nonexistent/privtrans/ckpt"), IngestionError);
}

TEST(FingerprintTest, SensitiveToValuesAndNames) {
  const GeneratorModel g = InitGenerator(TinyGenerator(), 3);
  ParamSet p = g.params;
  const std::string base = Fingerprint(p);
  EXPECT_EQ(base, Fingerprint(g.params));
  p[0].value[0] = std::nextafter(p[0].value[0], 1.0);
  EXPECT_NE(Fingerprint(p), base);
  ParamSet q = g.params;
  q[0].name = "other";
  EXPECT_NE(Fingerprint(q), base);
}

}  // namespace
}  // namespace privtrans
