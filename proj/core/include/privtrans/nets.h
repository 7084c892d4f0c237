#ifndef PRIVTRANS_NETS_H_
#define PRIVTRANS_NETS_H_

#include <cstdint>
#include <vector>

#include "privtrans/autodiff.h"
#include "privtrans/rng.h"
#include "privtrans/tensor.h"

namespace privtrans {

// Probabilities leaving the discriminator are clamped to [kProbEps,
// 1 - kProbEps] so every log term stays finite.
inline constexpr double kProbEps = 1e-7;

// U-Net: `depth` stride-2 4x4 encoder convs, mirrored transposed-conv decoder
// with skip connections, tanh head. Channel width doubles per level up to
// 8 x base_channels. The innermost `dropout_blocks` decoder blocks apply
// dropout with rate `dropout`.
struct GeneratorArch {
  int in_channels = 3;
  int out_channels = 3;
  int height = 32;
  int width = 32;
  int depth = 3;
  int base_channels = 16;
  double dropout = 0.5;
  int dropout_blocks = 2;

  // Throws ConfigError when the image size does not survive `depth` halvings.
  void Validate() const;
  int LevelChannels(int level) const;

  friend bool operator==(const GeneratorArch&, const GeneratorArch&) = default;
};

// Four conv layers: three stride-2 4x4 convs with LeakyReLU(0.2), then a 1x1
// conv to a logit map whose spatial mean goes through a sigmoid. Input is
// the channel concatenation of (candidate, condition).
struct DiscriminatorArch {
  int candidate_channels = 3;
  int condition_channels = 3;
  int height = 32;
  int width = 32;
  int base_channels = 16;

  void Validate() const;

  friend bool operator==(const DiscriminatorArch&,
                         const DiscriminatorArch&) = default;
};

struct GeneratorModel {
  GeneratorArch arch;
  ParamSet params;
  // Dropout doubles as the noise input, so it stays on at inference.
  bool dropout_active = true;
};

struct DiscriminatorModel {
  DiscriminatorArch arch;
  ParamSet params;
};

GeneratorModel InitGenerator(const GeneratorArch& arch, std::uint64_t seed);
DiscriminatorModel InitDiscriminator(const DiscriminatorArch& arch,
                                     std::uint64_t seed);

// Matching discriminator for a generator architecture.
DiscriminatorArch DiscriminatorFor(const GeneratorArch& g, int base_channels);

// Graph builders used by the training code. `params` must come from
// Tape::Bind on the model's ParamSet. Throws NumericError naming the layer
// whose activations went non-finite.
Var GeneratorGraph(Tape& tape, const GeneratorArch& arch,
                   const std::vector<Var>& params, Var x, Rng& rng,
                   bool dropout_active);
// Clamped probability D(candidate, condition) as a one-element node.
Var DiscriminatorGraph(Tape& tape, const DiscriminatorArch& arch,
                       const std::vector<Var>& params, Var candidate,
                       Var condition);

// G(z, x) where z is the dropout-mask stream read from `rng`.
ImageTensor GenForward(const GeneratorModel& g, const ImageTensor& x, Rng& rng);
double DiscForward(const DiscriminatorModel& d, const ImageTensor& candidate,
                   const ImageTensor& condition);

// Anything that maps an input image to an output image, possibly
// stochastically. The attack and the metrics only see this interface.
class Translator {
 public:
  virtual ~Translator() = default;
  virtual ImageTensor Translate(const ImageTensor& x, Rng& rng) const = 0;
};

class GeneratorTranslator final : public Translator {
 public:
  explicit GeneratorTranslator(const GeneratorModel& g) : g_(g) {}
  ImageTensor Translate(const ImageTensor& x, Rng& rng) const override {
    return GenForward(g_, x, rng);
  }

 private:
  const GeneratorModel& g_;
};

}  // namespace privtrans

#endif  // PRIVTRANS_NETS_H_
