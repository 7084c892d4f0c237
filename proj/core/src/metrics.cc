#include "privtrans/metrics.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "privtrans/autodiff.h"
#include "privtrans/errors.h"

namespace privtrans {

namespace {

constexpr int kStrides[3] = {1, 2, 2};

std::vector<ImageTensor> ConstantLike(const std::vector<ImageTensor>& images,
                                      double value) {
  const ImageTensor& ref = images.front();
  return std::vector<ImageTensor>(
      images.size(),
      ImageTensor::Filled(ref.channels(), ref.height(), ref.width(), value));
}

}  // namespace

FeatureExtractor::FeatureExtractor(std::uint64_t seed, int output_dim,
                                   int in_channels)
    : seed_(seed), output_dim_(output_dim), in_channels_(in_channels) {
  if (output_dim < 1) throw ConfigError("feature_dim must be >= 1");
  if (in_channels < 1) throw ConfigError("feature extractor needs channels");
  const int widths[4] = {in_channels, std::max(1, output_dim / 4),
                         std::max(1, output_dim / 2), output_dim};
  Rng root = Rng(seed).Split(0xFEA7);
  for (int l = 0; l < 3; ++l) {
    Rng rng = root.Split(static_cast<std::uint64_t>(l));
    const int cin = widths[l], cout = widths[l + 1];
    Tensor w = Tensor::Uninitialized({cout, cin, 3, 3});
    const double std_dev = std::sqrt(2.0 / (cin * 9));
    for (double& v : w.values()) v = std_dev * rng.Normal();
    Tensor b = Tensor::Uninitialized({cout});
    for (double& v : b.values()) v = 0.1 * rng.Normal();
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
  }
}

FeatureExtractor FeatureExtractor::External(Embedding fn, int output_dim) {
  if (!fn) throw ConfigError("external embedding needs a function");
  if (output_dim < 1) throw ConfigError("feature_dim must be >= 1");
  FeatureExtractor fx;
  fx.kind_ = FeatureKind::kExternalEmbedding;
  fx.output_dim_ = output_dim;
  fx.external_ = std::move(fn);
  return fx;
}

FeatureVector FeatureExtractor::Extract(const ImageTensor& image) const {
  if (kind_ == FeatureKind::kExternalEmbedding) {
    FeatureVector f = external_(image);
    if (static_cast<int>(f.size()) != output_dim_) {
      throw ShapeError("external embedding returned " +
                       std::to_string(f.size()) + " values, expected " +
                       std::to_string(output_dim_));
    }
    return f;
  }
  if (image.channels() != in_channels_) {
    throw ShapeError("feature extractor expects " +
                     std::to_string(in_channels_) + " channels");
  }
  Tape tape;
  Var h = tape.Leaf(image.tensor(), false);
  for (int l = 0; l < 3; ++l) {
    h = ops::Relu(ops::Conv2d(h, tape.Leaf(weights_[l], false),
                              tape.Leaf(biases_[l], false), kStrides[l], 1));
  }
  const Tensor& act = tape.value(h);
  const std::size_t plane = act.size() / output_dim_;
  FeatureVector f(output_dim_, 0.0);
  for (int c = 0; c < output_dim_; ++c) {
    double s = 0.0;
    const double* p = act.data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) s += p[i];
    f[c] = s / static_cast<double>(plane);
  }
  return f;
}

std::vector<FeatureVector> FeatureExtractor::Extract(
    const std::vector<ImageTensor>& images) const {
  std::vector<FeatureVector> out;
  out.reserve(images.size());
  for (const auto& im : images) {
    if (!im.SameShape(images.front())) {
      throw ShapeError("feature extraction needs equally shaped images");
    }
    out.push_back(Extract(im));
  }
  return out;
}

double PolynomialKernel(const FeatureVector& a, const FeatureVector& b) {
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
  const double base = dot / static_cast<double>(a.size()) + 1.0;
  return base * base * base;
}

KidResult Kid(const std::vector<FeatureVector>& real,
              const std::vector<FeatureVector>& gen) {
  if (real.size() < 2 || gen.size() < 2) {
    throw std::invalid_argument("KID needs at least two vectors per set");
  }
  const std::size_t d = real.front().size();
  for (const auto* set : {&real, &gen}) {
    for (const auto& v : *set) {
      if (v.size() != d) throw std::invalid_argument("KID feature dims differ");
    }
  }
  auto within = [](const std::vector<FeatureVector>& s) {
    double sum = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        sum += PolynomialKernel(s[i], s[j]);
      }
    }
    const double n = static_cast<double>(s.size());
    return 2.0 * sum / (n * (n - 1.0));
  };
  double across = 0.0;
  for (const auto& a : real) {
    for (const auto& b : gen) across += PolynomialKernel(a, b);
  }
  const double n = static_cast<double>(real.size());
  const double m = static_cast<double>(gen.size());
  KidResult r;
  r.kid_raw = within(real) + within(gen) - 2.0 * across / (n * m);
  r.kid = std::max(r.kid_raw, 0.0);
  r.n_real = static_cast<int>(real.size());
  r.n_gen = static_cast<int>(gen.size());
  return r;
}

KidCalibration CalibrateKid(const std::vector<ImageTensor>& real_test,
                            const FeatureExtractor& fx) {
  if (real_test.empty()) throw std::invalid_argument("calibration set is empty");
  const auto real = fx.Extract(real_test);
  KidCalibration c;
  c.kid_max = Kid(real, fx.Extract(ConstantLike(real_test, -1.0))).kid;
  c.kid_white = Kid(real, fx.Extract(ConstantLike(real_test, 1.0))).kid;
  c.kid_gray = Kid(real, fx.Extract(ConstantLike(real_test, 0.0))).kid;
  if (!(c.kid_max > 0.0)) {
    throw NumericError("kid calibration",
                       "black-image KID is not positive; test set is degenerate");
  }
  return c;
}

double CalibrateKidMax(const std::vector<ImageTensor>& real_test,
                       const FeatureExtractor& fx) {
  return CalibrateKid(real_test, fx).kid_max;
}

NkidResult NkidFromFeatures(const std::vector<FeatureVector>& generated,
                            const std::vector<FeatureVector>& reference,
                            double kid_max) {
  if (!(kid_max > 0.0)) throw std::invalid_argument("kid_max must be positive");
  NkidResult r;
  r.kid = Kid(reference, generated);
  r.kid_max = kid_max;
  r.nkid = std::min(100.0, 100.0 * r.kid.kid / kid_max);
  return r;
}

NkidResult Nkid(const std::vector<ImageTensor>& generated,
                const std::vector<ImageTensor>& reference,
                const FeatureExtractor& fx, double kid_max) {
  return NkidFromFeatures(fx.Extract(generated), fx.Extract(reference),
                          kid_max);
}

std::vector<ImageTensor> TranslateAll(const Translator& model,
                                      const std::vector<ImageTensor>& inputs,
                                      std::uint64_t seed) {
  std::vector<ImageTensor> out;
  out.reserve(inputs.size());
  const Rng root(seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Rng rng = root.Split(i);
    out.push_back(model.Translate(inputs[i], rng));
  }
  return out;
}

double GeneralizationGap(const Translator& model,
                         const std::vector<ImageTensor>& train_inputs,
                         const std::vector<ImageTensor>& test_inputs,
                         const std::vector<ImageTensor>& train_refs,
                         const std::vector<ImageTensor>& test_refs,
                         const FeatureExtractor& fx, double kid_max,
                         std::uint64_t seed) {
  const Rng root = Rng(seed).Split(0x6A9);
  const double q_train =
      Nkid(TranslateAll(model, train_inputs, root.Split(0).NextU64()),
           train_refs, fx, kid_max)
          .nkid;
  const double q_test =
      Nkid(TranslateAll(model, test_inputs, root.Split(1).NextU64()),
           test_refs, fx, kid_max)
          .nkid;
  return q_test - q_train;
}

LossHistogram MakeLossHistogram(const std::vector<double>& member_scores,
                                const std::vector<double>& nonmember_scores,
                                int n_bins) {
  if (n_bins < 2) throw std::invalid_argument("histogram needs >= 2 bins");
  if (member_scores.empty() || nonmember_scores.empty()) {
    throw std::invalid_argument("histogram needs scores on both sides");
  }
  double lo = member_scores.front(), hi = lo;
  for (const auto* s : {&member_scores, &nonmember_scores}) {
    for (double v : *s) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  const double width = hi > lo ? (hi - lo) / n_bins : 1.0;
  LossHistogram h;
  h.edges.resize(n_bins + 1);
  for (int k = 0; k <= n_bins; ++k) h.edges[k] = lo + k * width;
  h.edges[n_bins] = hi > lo ? hi : lo + width;

  auto fill = [&](const std::vector<double>& scores) {
    std::vector<double> p(n_bins, 0.0);
    for (double v : scores) {
      int k = static_cast<int>((v - lo) / width);
      p[std::clamp(k, 0, n_bins - 1)] += 1.0;
    }
    for (double& c : p) c /= static_cast<double>(scores.size());
    return p;
  };
  h.member_p = fill(member_scores);
  h.nonmember_p = fill(nonmember_scores);
  for (int k = 0; k < n_bins; ++k) {
    h.overlap += std::min(h.member_p[k], h.nonmember_p[k]);
  }
  return h;
}

GaussDefense::GaussDefense(const Translator& inner, double sigma)
    : inner_(inner), sigma_(sigma) {
  if (!(sigma >= 0.0)) throw ConfigError("gauss sigma must be >= 0");
}

ImageTensor GaussDefense::Translate(const ImageTensor& x, Rng& rng) const {
  ImageTensor out = inner_.Translate(x, rng);
  if (sigma_ == 0.0) return out;
  Tensor t = out.tensor();
  for (double& v : t.values()) {
    v = std::clamp(v + sigma_ * rng.Normal(), -1.0, 1.0);
  }
  return ImageTensor(std::move(t));
}

}  // namespace privtrans
