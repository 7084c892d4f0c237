#ifndef PRIVTRANS_METRICS_H_
#define PRIVTRANS_METRICS_H_

#include <cstdint>
#include <functional>
#include <vector>

#include "privtrans/nets.h"
#include "privtrans/tensor.h"

namespace privtrans {

using FeatureVector = std::vector<double>;

enum class FeatureKind { kFrozenRandomConv, kExternalEmbedding };

// Maps images to fixed-length feature vectors for KID. The default is a
// frozen random conv net: 3x3 convs with ReLU at strides 1, 2, 2, widening
// to `output_dim` channels, then global average pooling. An external
// embedding wraps any deterministic function of the image.
class FeatureExtractor {
 public:
  using Embedding = std::function<FeatureVector(const ImageTensor&)>;

  FeatureExtractor(std::uint64_t seed, int output_dim, int in_channels = 3);
  static FeatureExtractor External(Embedding fn, int output_dim);

  FeatureKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  int output_dim() const { return output_dim_; }

  FeatureVector Extract(const ImageTensor& image) const;
  // Throws ShapeError when the images do not share a shape.
  std::vector<FeatureVector> Extract(const std::vector<ImageTensor>& images) const;

 private:
  FeatureExtractor() = default;

  FeatureKind kind_ = FeatureKind::kFrozenRandomConv;
  std::uint64_t seed_ = 0;
  int output_dim_ = 0;
  int in_channels_ = 3;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
  Embedding external_;
};

struct KidResult {
  double kid_raw = 0.0;
  double kid = 0.0;
  int n_real = 0;
  int n_gen = 0;
};

struct NkidResult {
  double nkid = 0.0;
  double kid_max = 0.0;
  KidResult kid;
};

// (a.b / d + 1)^3.
double PolynomialKernel(const FeatureVector& a, const FeatureVector& b);

// Unbiased squared MMD under PolynomialKernel. Throws std::invalid_argument
// when either set has fewer than two vectors or dimensions disagree.
KidResult Kid(const std::vector<FeatureVector>& real,
              const std::vector<FeatureVector>& gen);

struct KidCalibration {
  double kid_max = 0.0;  // KID of all-black images; NKID 100 by definition
  double kid_white = 0.0;
  double kid_gray = 0.0;
};

// KID between the test images and as many constant images. Black (-1)
// defines kid_max; white and mid-gray are kept for diagnostics.
KidCalibration CalibrateKid(const std::vector<ImageTensor>& real_test,
                            const FeatureExtractor& fx);
double CalibrateKidMax(const std::vector<ImageTensor>& real_test,
                       const FeatureExtractor& fx);

// 100 * kid / kid_max, capped at 100. Throws std::invalid_argument when
// kid_max is not positive.
NkidResult Nkid(const std::vector<ImageTensor>& generated,
                const std::vector<ImageTensor>& reference,
                const FeatureExtractor& fx, double kid_max);
NkidResult NkidFromFeatures(const std::vector<FeatureVector>& generated,
                            const std::vector<FeatureVector>& reference,
                            double kid_max);

// Outputs of `model` on `inputs`, one draw each; draw i uses
// Rng(seed).Split(i).
std::vector<ImageTensor> TranslateAll(const Translator& model,
                                      const std::vector<ImageTensor>& inputs,
                                      std::uint64_t seed);

// NKID on unseen inputs minus NKID on training inputs. Positive when the
// model does better on what it was trained on.
double GeneralizationGap(const Translator& model,
                         const std::vector<ImageTensor>& train_inputs,
                         const std::vector<ImageTensor>& test_inputs,
                         const std::vector<ImageTensor>& train_refs,
                         const std::vector<ImageTensor>& test_refs,
                         const FeatureExtractor& fx, double kid_max,
                         std::uint64_t seed);

struct LossHistogram {
  std::vector<double> edges;  // n_bins + 1, shared by both histograms
  std::vector<double> member_p;
  std::vector<double> nonmember_p;
  double overlap = 0.0;  // sum_i min(member_p[i], nonmember_p[i])
};

// Equal-width bins over [min, max] of the union; the last bin is closed.
// Throws std::invalid_argument on n_bins < 2 or an empty list.
LossHistogram MakeLossHistogram(const std::vector<double>& member_scores,
                                const std::vector<double>& nonmember_scores,
                                int n_bins);

// Serving-time output perturbation: N(0, sigma^2) per pixel, then clamp to
// [-1, 1]. Noise is drawn from the same stream after the wrapped model's
// own draws. sigma = 0 returns the wrapped output unchanged.
class GaussDefense final : public Translator {
 public:
  GaussDefense(const Translator& inner, double sigma);
  ImageTensor Translate(const ImageTensor& x, Rng& rng) const override;
  double sigma() const { return sigma_; }

 private:
  const Translator& inner_;
  double sigma_;
};

}  // namespace privtrans

#endif  // PRIVTRANS_METRICS_H_
