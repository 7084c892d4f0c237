#include "privtrans/dataset_io.h"

#include <cmath>
#include <fstream>

#include <gtest/gtest.h>

#include "privtrans/errors.h"
#include "test_util.h"

namespace privtrans {
namespace {

using testing_util::TempDir;

ImageTensor ByteGridImage(int c, int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(static_cast<std::size_t>(c) * h * w);
  for (double& x : v) x = static_cast<double>(rng.NextU64() % 256) / 127.5 - 1.0;
  return ImageTensor(c, h, w, std::move(v));
}

TEST(PngTest, RgbRoundTripIsExact) {
  TempDir dir("png_rgb");
  const ImageTensor im = ByteGridImage(3, 5, 7, 1);
  WritePng(im, dir.path() / "a.png");
  EXPECT_EQ(ReadPng(dir.path() / "a.png"), im);
}

TEST(PngTest, GrayRoundTripIsExact) {
  TempDir dir("png_gray");
  const ImageTensor im = ByteGridImage(1, 6, 4, 2);
  WritePng(im, dir.path() / "g.png");
  const ImageTensor back = ReadPng(dir.path() / "g.png");
  EXPECT_EQ(back.channels(), 1);
  EXPECT_EQ(back, im);
}

TEST(PngTest, EndpointsMapToBlackAndWhite) {
  TempDir dir("png_ends");
  WritePng(ImageTensor::Filled(3, 2, 2, -1.0), dir.path() / "k.png");
  WritePng(ImageTensor::Filled(3, 2, 2, 1.0), dir.path() / "w.png");
  EXPECT_EQ(ReadPng(dir.path() / "k.png"), ImageTensor::Filled(3, 2, 2, -1.0));
  EXPECT_EQ(ReadPng(dir.path() / "w.png"), ImageTensor::Filled(3, 2, 2, 1.0));
}

TEST(PngTest, OffGridValuesQuantizeWithinHalfStep) {
  TempDir dir("png_q");
  Rng rng(5);
  const ImageTensor im = testing_util::RandomImage(rng, 3, 4);
  WritePng(im, dir.path() / "q.png");
  const ImageTensor back = ReadPng(dir.path() / "q.png");
  for (std::size_t i = 0; i < im.size(); ++i) {
    EXPECT_LE(std::fabs(back.values()[i] - im.values()[i]), 0.5 / 127.5 + 1e-12);
  }
}

TEST(PngTest, MissingOrCorruptFileIsIngestionError) {
  TempDir dir("png_bad");
  EXPECT_THROW(ReadPng(dir.path() / "none.png"), IngestionError);
  std::ofstream(dir.path() / "bad.png") << "not a png";
  EXPECT_THROW(ReadPng(dir.path() / "bad.png"), IngestionError);
}

TEST(PairedFolderTest, RoundTripSortedById) {
  TempDir dir("folder");
  std::vector<PairedSample> s;
  s.emplace_back("b", ByteGridImage(3, 8, 8, 1), ByteGridImage(3, 8, 8, 2));
  s.emplace_back("a", ByteGridImage(3, 8, 8, 3), ByteGridImage(3, 8, 8, 4));
  SavePairedFolder(s, dir.path());
  const auto back = LoadPairedFolder(dir.path());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id(), "a");
  EXPECT_EQ(back[0].input(), s[1].input());
  EXPECT_EQ(back[0].target(), s[1].target());
  EXPECT_EQ(back[1].target(), s[0].target());
  const auto unlabeled = LoadPairedFolder(dir.path(), false);
  EXPECT_FALSE(unlabeled[0].has_target());
}

TEST(PairedFolderTest, MissingTargetIsIngestionError) {
  TempDir dir("folder_missing");
  std::vector<PairedSample> s;
  s.emplace_back("a", ByteGridImage(3, 8, 8, 1));
  SavePairedFolder(s, dir.path());
  EXPECT_THROW(LoadPairedFolder(dir.path(), true), IngestionError);
  EXPECT_EQ(LoadPairedFolder(dir.path(), false).size(), 1u);
}

TEST(DatasetIoTest, SplitsRoundTrip) {
  TempDir dir("dataset");
  const auto samples = GenerateSyntheticTask(1, 12, 16, 16);
  const auto splits = MakeSplits(samples, 6, 3, 3, 2);
  SaveDataset(splits, dir.path());
  const auto back = LoadDataset(dir.path());
  ASSERT_EQ(back.train.size(), 6u);
  ASSERT_EQ(back.proxy.size(), 3u);
  ASSERT_EQ(back.test.size(), 3u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(back.train[i].id(), splits.train[i].id());
    EXPECT_EQ(back.train[i].target(), splits.train[i].target());
  }
  for (const auto& p : back.proxy) {
    EXPECT_FALSE(p.has_target());
    EXPECT_EQ(*back.proxy_truths.Reveal(p.id()), *splits.proxy_truths.Reveal(p.id()));
  }
  EXPECT_NO_THROW(back.Validate());
}

TEST(DatasetIoTest, MissingManifestIsIngestionError) {
  TempDir dir("dataset_bad");
  EXPECT_THROW(LoadDataset(dir.path()), IngestionError);
}

}  // namespace
}  // namespace privtrans
