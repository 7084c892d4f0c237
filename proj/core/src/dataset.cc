#include "privtrans/dataset.h"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "privtrans/errors.h"
#include "privtrans/rng.h"

namespace privtrans {

namespace {

std::atomic<std::uint64_t> g_ground_truth_reads{0};

constexpr int kClasses = 4;

// Label-map palette: background then one color per class.
constexpr std::array<std::array<double, 3>, kClasses + 1> kLabelPalette{{
    {-1.0, -1.0, 0.6},
    {1.0, -1.0, -1.0},
    {-1.0, 1.0, -1.0},
    {1.0, 1.0, -1.0},
    {-1.0, 1.0, 1.0},
}};

// Rendered base colors for each class.
constexpr std::array<std::array<double, 3>, kClasses + 1> kRenderBase{{
    {-0.2, -0.1, 0.1},
    {0.35, -0.25, -0.4},
    {-0.3, 0.2, -0.3},
    {0.1, 0.05, -0.5},
    {-0.45, -0.05, 0.3},
}};

// Stripe direction (dy, dx) and period in pixels per class.
struct Texture {
  double dy, dx, period;
};
constexpr std::array<Texture, kClasses + 1> kTextures{{
    {0.0, 0.0, 1.0},
    {1.0, 0.0, 4.0},
    {0.0, 1.0, 4.0},
    {0.7071067811865476, 0.7071067811865476, 4.0},
    {0.7071067811865476, -0.7071067811865476, 5.0},
}};

constexpr double kTextureAmplitude = 0.4;
constexpr double kShadeAmplitude = 0.15;
constexpr double kFieldAmplitude = 0.3;
constexpr int kFieldGrid = 4;

struct Rect {
  int y0, x0, y1, x1;  // half-open
  int cls;
};

double Quantize(double v) {
  v = std::clamp(v, -1.0, 1.0);
  const double k = std::round((v + 1.0) * 127.5);
  return k / 127.5 - 1.0;
}

bool Touches(const Rect& a, const Rect& b) {
  // One-pixel gap keeps neighbouring rectangles separable in x.
  return a.y0 <= b.y1 && b.y0 <= a.y1 && a.x0 <= b.x1 && b.x0 <= a.x1;
}

std::vector<Rect> SampleLayout(Rng& rng, int h, int w) {
  const int count = 2 + static_cast<int>(rng.Below(4));
  const int min_h = std::max(2, h / 5), max_h = std::max(min_h, h / 2);
  const int min_w = std::max(2, w / 5), max_w = std::max(min_w, w / 2);
  std::vector<Rect> rects;
  for (int attempt = 0; attempt < 200 && static_cast<int>(rects.size()) < count;
       ++attempt) {
    const int rh = min_h + static_cast<int>(rng.Below(max_h - min_h + 1));
    const int rw = min_w + static_cast<int>(rng.Below(max_w - min_w + 1));
    const int y0 = static_cast<int>(rng.Below(h - rh + 1));
    const int x0 = static_cast<int>(rng.Below(w - rw + 1));
    const Rect r{y0, x0, y0 + rh, x0 + rw,
                 1 + static_cast<int>(rng.Below(kClasses))};
    if (std::none_of(rects.begin(), rects.end(),
                     [&](const Rect& o) { return Touches(r, o); })) {
      rects.push_back(r);
    }
  }
  return rects;
}

std::uint64_t LayoutHash(const std::vector<Rect>& rects) {
  std::uint64_t h = 0x1A40;
  for (const Rect& r : rects) {
    h = Mix64(h ^ static_cast<std::uint64_t>(r.y0));
    h = Mix64(h ^ static_cast<std::uint64_t>(r.x0));
    h = Mix64(h ^ static_cast<std::uint64_t>(r.y1));
    h = Mix64(h ^ static_cast<std::uint64_t>(r.x1));
    h = Mix64(h ^ static_cast<std::uint64_t>(r.cls));
  }
  return h;
}

// Smooth color offset over the whole image: a kFieldGrid x kFieldGrid grid
// of values in [-kFieldAmplitude, kFieldAmplitude] per channel, bilinearly
// interpolated between cell centers. Seeded by the layout, so it is a fixed
// function of x that no local rule predicts.
std::vector<double> LightingField(std::uint64_t key, int h, int w) {
  Rng rng(key);
  std::vector<double> grid(3 * kFieldGrid * kFieldGrid);
  for (double& g : grid) g = kFieldAmplitude * (2.0 * rng.Uniform() - 1.0);
  std::vector<double> field(3 * h * w);
  auto axis = [](int i, int n, int& lo, double& t) {
    const double pos = std::clamp((i + 0.5) * kFieldGrid / n - 0.5, 0.0,
                                  static_cast<double>(kFieldGrid - 1));
    lo = std::min(static_cast<int>(pos), kFieldGrid - 2);
    t = pos - lo;
  };
  for (int r = 0; r < h; ++r) {
    int gy;
    double ty;
    axis(r, h, gy, ty);
    for (int col = 0; col < w; ++col) {
      int gx;
      double tx;
      axis(col, w, gx, tx);
      for (int c = 0; c < 3; ++c) {
        const double* g = grid.data() + c * kFieldGrid * kFieldGrid;
        const double top = (1 - tx) * g[gy * kFieldGrid + gx] + tx * g[gy * kFieldGrid + gx + 1];
        const double bot = (1 - tx) * g[(gy + 1) * kFieldGrid + gx] +
                           tx * g[(gy + 1) * kFieldGrid + gx + 1];
        field[(static_cast<std::size_t>(c) * h + r) * w + col] = (1 - ty) * top + ty * bot;
      }
    }
  }
  return field;
}

PairedSample Render(const std::string& id, const std::vector<Rect>& rects,
                    int h, int w) {
  std::vector<double> x(3 * h * w), y(3 * h * w);
  const std::vector<double> field = LightingField(LayoutHash(rects), h, w);
  auto put = [&](std::vector<double>& img, int c, int r, int col, double v) {
    img[(static_cast<std::size_t>(c) * h + r) * w + col] = Quantize(v);
  };
  auto lit = [&](int c, int r, int col, double v) {
    put(y, c, r, col, v + field[(static_cast<std::size_t>(c) * h + r) * w + col]);
  };
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      const double ramp = static_cast<double>(r) / (h - 1) - 0.5;
      for (int c = 0; c < 3; ++c) {
        put(x, c, r, col, kLabelPalette[0][c]);
        lit(c, r, col, kRenderBase[0][c] + 0.3 * ramp);
      }
    }
  }
  for (const Rect& rect : rects) {
    const Texture& tex = kTextures[rect.cls];
    const double rh = rect.y1 - rect.y0, rw = rect.x1 - rect.x0;
    for (int r = rect.y0; r < rect.y1; ++r) {
      for (int col = rect.x0; col < rect.x1; ++col) {
        const double u = r - rect.y0, v = col - rect.x0;
        const double stripe =
            std::sin(2.0 * std::numbers::pi * (tex.dy * u + tex.dx * v) /
                     tex.period);
        const double shade = kShadeAmplitude * ((u + 0.5) / rh + (v + 0.5) / rw - 1.0);
        for (int c = 0; c < 3; ++c) {
          put(x, c, r, col, kLabelPalette[rect.cls][c]);
          lit(c, r, col,
              kRenderBase[rect.cls][c] + shade + kTextureAmplitude * stripe);
        }
      }
    }
  }
  return PairedSample(id, ImageTensor(3, h, w, std::move(x)),
                      ImageTensor(3, h, w, std::move(y)));
}

void Shuffle(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::swap(idx[i - 1], idx[rng.Below(i)]);
  }
}

}  // namespace

PairedSample::PairedSample(std::string id, ImageTensor input,
                           std::optional<ImageTensor> target)
    : id_(std::move(id)), input_(std::move(input)), target_(std::move(target)) {
  if (target_ && (target_->height() != input_.height() ||
                  target_->width() != input_.width())) {
    throw ShapeError("sample " + id_ + ": x and y differ in height/width");
  }
}

const ImageTensor& PairedSample::target() const {
  g_ground_truth_reads.fetch_add(1, std::memory_order_relaxed);
  if (!target_) throw std::logic_error("sample " + id_ + " has no target");
  return *target_;
}

std::uint64_t GroundTruthReads() {
  return g_ground_truth_reads.load(std::memory_order_relaxed);
}

void ProxyVault::Deposit(const std::string& id, ImageTensor truth) {
  truths_.insert_or_assign(id, std::move(truth));
}

std::optional<ImageTensor> ProxyVault::Reveal(const std::string& id) const {
  auto it = truths_.find(id);
  if (it == truths_.end()) return std::nullopt;
  return it->second;
}

void DatasetSplits::Validate() const {
  std::set<std::string> seen;
  auto check = [&](const std::vector<PairedSample>& split, const char* name,
                   bool labeled) {
    for (const auto& s : split) {
      if (!seen.insert(s.id()).second) {
        throw ConfigError("sample id " + s.id() + " appears in two splits");
      }
      if (s.has_target() != labeled) {
        throw ConfigError(std::string(name) + " sample " + s.id() +
                          (labeled ? " is missing y" : " must not carry y"));
      }
    }
  };
  check(train, "train", true);
  check(proxy, "proxy", false);
  check(test, "test", true);
}

SplitSizes FacadeSplitSizes(double scale) {
  return {static_cast<int>(std::lround(400 * scale)),
          static_cast<int>(std::lround(100 * scale)),
          static_cast<int>(std::lround(106 * scale))};
}

SplitSizes CityscapesSplitSizes(double scale) {
  return {static_cast<int>(std::lround(2975 * scale)),
          static_cast<int>(std::lround(250 * scale)),
          static_cast<int>(std::lround(250 * scale))};
}

std::vector<PairedSample> GenerateSyntheticTask(std::uint64_t seed, int n,
                                                int h, int w) {
  if (n < 1) throw ConfigError("synthetic task needs n >= 1");
  if (h < 8 || w < 8) throw ConfigError("synthetic images must be >= 8x8");
  const Rng root(seed);
  std::vector<PairedSample> out;
  out.reserve(n);
  for (int i = 0; i < n; ++i) {
    Rng rng = root.Split(static_cast<std::uint64_t>(i));
    const auto rects = SampleLayout(rng, h, w);
    out.push_back(Render("s" + std::to_string(seed) + "_" + std::to_string(i),
                         rects, h, w));
  }
  return out;
}

DatasetSplits MakeSplits(const std::vector<PairedSample>& samples, int n_train,
                         int n_proxy, int n_test, std::uint64_t seed) {
  if (n_train < 0 || n_proxy < 0 || n_test < 0) {
    throw ConfigError("split sizes must be non-negative");
  }
  const std::size_t need = static_cast<std::size_t>(n_train) + n_proxy + n_test;
  if (need > samples.size()) {
    throw ConfigError("need " + std::to_string(need) + " samples for the splits, have " +
                      std::to_string(samples.size()));
  }
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(seed).Split(0x5B17);
  Shuffle(idx, rng);

  DatasetSplits splits;
  std::size_t k = 0;
  for (int i = 0; i < n_train; ++i) splits.train.push_back(samples[idx[k++]]);
  for (int i = 0; i < n_proxy; ++i) {
    const PairedSample& s = samples[idx[k++]];
    if (s.has_target()) splits.proxy_truths.Deposit(s.id(), s.target());
    splits.proxy.push_back(s.WithoutTarget());
  }
  for (int i = 0; i < n_test; ++i) splits.test.push_back(samples[idx[k++]]);
  splits.Validate();
  return splits;
}

AttackEvalSet BuildAttackSet(const DatasetSplits& splits, std::uint64_t seed) {
  if (splits.test.empty()) throw ConfigError("attack set needs a test split");
  if (splits.train.size() < splits.test.size()) {
    throw ConfigError("attack set needs |train| >= |test|");
  }
  std::vector<std::size_t> idx(splits.train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = Rng(seed).Split(0xA77A);
  // Partial Fisher-Yates: the first |test| slots are a uniform draw.
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    std::swap(idx[i], idx[i + rng.Below(idx.size() - i)]);
  }
  AttackEvalSet set;
  for (std::size_t i = 0; i < splits.test.size(); ++i) {
    set.members.push_back(splits.train[idx[i]]);
  }
  set.nonmembers = splits.test;
  return set;
}

}  // namespace privtrans
