#ifndef PRIVTRANS_DATASET_H_
#define PRIVTRANS_DATASET_H_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "privtrans/tensor.h"

namespace privtrans {

// One (x, y) pair. Proxy samples carry no y. Every call to target() bumps a
// process-wide counter so tests can prove that a code path never touched a
// ground truth.
class PairedSample {
 public:
  PairedSample(std::string id, ImageTensor input,
               std::optional<ImageTensor> target = std::nullopt);

  const std::string& id() const { return id_; }
  const ImageTensor& input() const { return input_; }
  bool has_target() const { return target_.has_value(); }
  // Throws std::logic_error when the sample is unlabeled.
  const ImageTensor& target() const;

  PairedSample WithoutTarget() const { return PairedSample(id_, input_); }

 private:
  std::string id_;
  ImageTensor input_;
  std::optional<ImageTensor> target_;
};

// Total PairedSample::target() calls so far in this process.
std::uint64_t GroundTruthReads();

// Auditor-only store for the ground truths stripped from proxy samples.
// Training code receives DatasetSplits but has no reason to open this.
class ProxyVault {
 public:
  void Deposit(const std::string& id, ImageTensor truth);
  std::optional<ImageTensor> Reveal(const std::string& id) const;
  bool empty() const { return truths_.empty(); }
  std::size_t size() const { return truths_.size(); }

 private:
  std::map<std::string, ImageTensor> truths_;
};

struct DatasetSplits {
  std::vector<PairedSample> train;
  std::vector<PairedSample> proxy;
  std::vector<PairedSample> test;
  ProxyVault proxy_truths;

  // Throws ConfigError on overlapping ids or misplaced labels.
  void Validate() const;
};

struct SplitSizes {
  int train = 0;
  int proxy = 0;
  int test = 0;

  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// Train/proxy/test counts with the CMP Facade (400/100/106) and Cityscapes
// (2975/250/250) ratios, each scaled and rounded to the nearest integer.
SplitSizes FacadeSplitSizes(double scale = 1.0);
SplitSizes CityscapesSplitSizes(double scale = 1.0);

struct AttackEvalSet {
  std::vector<PairedSample> members;
  std::vector<PairedSample> nonmembers;
};

// `n` label-map/rendering pairs of size 3 x h x w. The label map x holds
// 2-5 flat-colored, non-touching rectangles on a background; y renders the
// same rectangles with a per-class stripe texture and a shading ramp over a
// gradient background, all under a smooth lighting field seeded by a hash of
// the whole layout. y is a deterministic function of x, but the lighting can
// only be learned by memorizing individual layouts. Pixel values sit on the
// 8-bit grid k / 127.5 - 1 so PNG storage is lossless.
std::vector<PairedSample> GenerateSyntheticTask(std::uint64_t seed, int n,
                                                int h, int w);

// Seeded shuffle, then the first n_train / n_proxy / n_test samples go to
// each split. Proxy samples lose their y; it goes into the vault.
DatasetSplits MakeSplits(const std::vector<PairedSample>& samples, int n_train,
                         int n_proxy, int n_test, std::uint64_t seed);

// Non-members are the whole test split; members are |test| train samples
// drawn without replacement.
AttackEvalSet BuildAttackSet(const DatasetSplits& splits, std::uint64_t seed);

}  // namespace privtrans

#endif  // PRIVTRANS_DATASET_H_
