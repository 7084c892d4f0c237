#ifndef PRIVTRANS_AUTODIFF_H_
#define PRIVTRANS_AUTODIFF_H_

#include <functional>
#include <string>
#include <vector>

#include "privtrans/rng.h"
#include "privtrans/tensor.h"

namespace privtrans {

struct NamedTensor {
  std::string name;
  Tensor value;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

// Ordered list of named parameter arrays.
using ParamSet = std::vector<NamedTensor>;

std::size_t ParamCount(const ParamSet& params);

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
// sweep visits every consumer before its producers.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, int self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // References `value` without copying; it must outlive the tape.
  Var Leaf(const Tensor& value, bool requires_grad);
  Var Constant(Tensor value);
  std::vector<Var> Bind(const ParamSet& params, bool requires_grad);

  const Tensor& value(Var v) const;
  // Empty tensor when no gradient reached `v`.
  const Tensor& grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  // Moves the accumulated gradient out, leaving the node without one.
  Tensor TakeGrad(Var v);

  // Seeds d(loss)/d(loss) = 1 and sweeps. `loss` must be a one-element node.
  void Backward(Var loss);

  // Op plumbing.
  Var Push(Tensor value, std::vector<int> parents, BackwardFn backward,
           bool differentiable = true);
  const Tensor& value(int id) const;
  const Tensor& grad(int id) const { return nodes_[id].grad; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  // Zero-initialized on first use.
  Tensor& MutableGrad(int id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    bool differentiable = true;
  };
  std::vector<Node> nodes_;
};

namespace ops {

// x: Cin x H x W, w: Cout x Cin x k x k, b: Cout.
Var Conv2d(Var x, Var w, Var b, int stride, int pad);
// x: Cin x H x W, w: Cin x Cout x k x k, b: Cout. Output side is
// (H - 1) * stride - 2 * pad + k.
Var ConvTranspose2d(Var x, Var w, Var b, int stride, int pad);

Var Relu(Var x);
Var LeakyRelu(Var x, double slope);
Var Tanh(Var x);
Var Sigmoid(Var x);
// Inverted dropout; p == 0 is the identity and draws nothing from `rng`.
Var Dropout(Var x, double p, Rng& rng);
Var ConcatChannels(Var a, Var b);

Var Add(Var a, Var b);
Var Sub(Var a, Var b);
Var Scale(Var x, double factor);
Var AddScalar(Var x, double c);
// Zero derivative outside (lo, hi).
Var Clamp(Var x, double lo, double hi);
Var Log(Var x);
Var Mean(Var x);
Var SumSquares(Var x);
// mean |a - b| over all elements, as a one-element node.
Var MeanAbsDiff(Var a, Var b);
// 1[x > 0]. Has no derivative; a backward sweep that needs one throws
// NonDifferentiableError.
Var Heaviside(Var x);

}  // namespace ops

struct GradientResult {
  double loss = 0.0;
  std::vector<Tensor> grads;  // aligned with the ParamSet passed in
};

// Evaluates `loss_fn` on a fresh tape with `params` bound as differentiable
// leaves and returns d(loss)/d(param) for each entry.
GradientResult Gradient(
    const std::function<Var(Tape&, const std::vector<Var>&)>& loss_fn,
    const ParamSet& params);

}  // namespace privtrans

#endif  // PRIVTRANS_AUTODIFF_H_
