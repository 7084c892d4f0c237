#include "privtrans/nets.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "privtrans/errors.h"

namespace privtrans {

namespace {

constexpr double kInitStd = 0.02;
constexpr double kLeakySlope = 0.2;

void AddParam(ParamSet& params, std::string name, std::vector<int> shape,
              Rng* rng) {
  Tensor t(std::move(shape), 0.0);
  if (rng != nullptr) {
    for (double& v : t.values()) v = kInitStd * rng->Normal();
  }
  params.push_back({std::move(name), std::move(t)});
}

Var Checked(Tape& tape, Var v, const std::string& layer) {
  if (!tape.value(v).AllFinite()) {
    throw NumericError(layer, "non-finite activation in layer " + layer);
  }
  return v;
}

void RequireShape(const Tensor& t, int c, int h, int w, const char* what) {
  if (t.rank() != 3 || t.dim(0) != c || t.dim(1) != h || t.dim(2) != w) {
    throw ShapeError(std::string(what) + " has shape " + t.ShapeString() +
                     ", expected [" + std::to_string(c) + "x" +
                     std::to_string(h) + "x" + std::to_string(w) + "]");
  }
}

}  // namespace

void GeneratorArch::Validate() const {
  if (in_channels < 1 || out_channels < 1 || base_channels < 1) {
    throw ConfigError("generator channel counts must be positive");
  }
  if (depth < 1 || depth > 16) throw ConfigError("generator depth out of range");
  if (dropout < 0.0 || dropout >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1)");
  }
  if (dropout_blocks < 0) throw ConfigError("dropout_blocks must be >= 0");
  const int step = 1 << depth;
  if (height < step || width < step || height % step != 0 ||
      width % step != 0) {
    throw ConfigError("depth " + std::to_string(depth) + " needs image sides " +
                      "divisible by " + std::to_string(step) + ", got " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
}

int GeneratorArch::LevelChannels(int level) const {
  return base_channels << std::min(level, 3);
}

void DiscriminatorArch::Validate() const {
  if (candidate_channels < 1 || condition_channels < 1 || base_channels < 1) {
    throw ConfigError("discriminator channel counts must be positive");
  }
  if (height < 8 || width < 8 || height % 8 != 0 || width % 8 != 0) {
    throw ConfigError("discriminator needs image sides divisible by 8");
  }
}

DiscriminatorArch DiscriminatorFor(const GeneratorArch& g, int base_channels) {
  return DiscriminatorArch{g.out_channels, g.in_channels, g.height, g.width,
                           base_channels};
}

GeneratorModel InitGenerator(const GeneratorArch& arch, std::uint64_t seed) {
  arch.Validate();
  Rng rng = Rng(seed).Split(0x6E6E);
  GeneratorModel g;
  g.arch = arch;
  int in = arch.in_channels;
  for (int i = 0; i < arch.depth; ++i) {
    const int out = arch.LevelChannels(i);
    AddParam(g.params, "enc" + std::to_string(i) + ".w", {out, in, 4, 4}, &rng);
    AddParam(g.params, "enc" + std::to_string(i) + ".b", {out}, nullptr);
    in = out;
  }
  for (int i = arch.depth - 1; i >= 0; --i) {
    const int dec_in =
        i == arch.depth - 1 ? arch.LevelChannels(i) : 2 * arch.LevelChannels(i);
    const int dec_out = i == 0 ? arch.out_channels : arch.LevelChannels(i - 1);
    AddParam(g.params, "dec" + std::to_string(i) + ".w", {dec_in, dec_out, 4, 4},
             &rng);
    AddParam(g.params, "dec" + std::to_string(i) + ".b", {dec_out}, nullptr);
  }
  return g;
}

DiscriminatorModel InitDiscriminator(const DiscriminatorArch& arch,
                                     std::uint64_t seed) {
  arch.Validate();
  Rng rng = Rng(seed).Split(0xD15C);
  DiscriminatorModel d;
  d.arch = arch;
  int in = arch.candidate_channels + arch.condition_channels;
  for (int i = 0; i < 3; ++i) {
    const int out = arch.base_channels << i;
    AddParam(d.params, "conv" + std::to_string(i) + ".w", {out, in, 4, 4}, &rng);
    AddParam(d.params, "conv" + std::to_string(i) + ".b", {out}, nullptr);
    in = out;
  }
  AddParam(d.params, "head.w", {1, in, 1, 1}, &rng);
  AddParam(d.params, "head.b", {1}, nullptr);
  return d;
}

Var GeneratorGraph(Tape& tape, const GeneratorArch& arch,
                   const std::vector<Var>& params, Var x, Rng& rng,
                   bool dropout_active) {
  RequireShape(tape.value(x), arch.in_channels, arch.height, arch.width,
               "generator input");
  const int depth = arch.depth;
  std::vector<Var> skips;
  Var h = x;
  for (int i = 0; i < depth; ++i) {
    if (i > 0) h = ops::LeakyRelu(h, kLeakySlope);
    h = ops::Conv2d(h, params[2 * i], params[2 * i + 1], 2, 1);
    h = Checked(tape, h, "enc" + std::to_string(i));
    skips.push_back(h);
  }
  for (int i = depth - 1; i >= 0; --i) {
    const int slot = 2 * depth + 2 * (depth - 1 - i);
    if (i < depth - 1) h = ops::ConcatChannels(h, skips[i]);
    h = ops::Relu(h);
    h = ops::ConvTranspose2d(h, params[slot], params[slot + 1], 2, 1);
    const std::string name = "dec" + std::to_string(i);
    if (i == 0) {
      h = ops::Tanh(h);
    } else if (dropout_active && depth - 1 - i < arch.dropout_blocks) {
      h = ops::Dropout(h, arch.dropout, rng);
    }
    h = Checked(tape, h, name);
  }
  return h;
}

Var DiscriminatorGraph(Tape& tape, const DiscriminatorArch& arch,
                       const std::vector<Var>& params, Var candidate,
                       Var condition) {
  RequireShape(tape.value(candidate), arch.candidate_channels, arch.height,
               arch.width, "discriminator candidate");
  RequireShape(tape.value(condition), arch.condition_channels, arch.height,
               arch.width, "discriminator condition");
  Var h = ops::ConcatChannels(candidate, condition);
  for (int i = 0; i < 3; ++i) {
    h = ops::Conv2d(h, params[2 * i], params[2 * i + 1], 2, 1);
    h = ops::LeakyRelu(h, kLeakySlope);
    h = Checked(tape, h, "conv" + std::to_string(i));
  }
  h = ops::Conv2d(h, params[6], params[7], 1, 0);
  h = Checked(tape, ops::Mean(h), "head");
  return ops::Clamp(ops::Sigmoid(h), kProbEps, 1.0 - kProbEps);
}

ImageTensor GenForward(const GeneratorModel& g, const ImageTensor& x,
                       Rng& rng) {
  Tape tape;
  const auto params = tape.Bind(g.params, false);
  const Var in = tape.Leaf(x.tensor(), false);
  const Var out = GeneratorGraph(tape, g.arch, params, in, rng, g.dropout_active);
  return ImageTensor(tape.value(out));
}

double DiscForward(const DiscriminatorModel& d, const ImageTensor& candidate,
                   const ImageTensor& condition) {
  Tape tape;
  const auto params = tape.Bind(d.params, false);
  const Var p = DiscriminatorGraph(tape, d.arch, params,
                                   tape.Leaf(candidate.tensor(), false),
                                   tape.Leaf(condition.tensor(), false));
  return tape.value(p)[0];
}

}  // namespace privtrans
