#include "privtrans/autodiff.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

#include "privtrans/errors.h"

namespace privtrans {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

const Tensor kEmpty;

// Geometry of a strided, zero-padded k x k window over a C x H x W image.
struct ConvGeometry {
  int channels, height, width, kernel, stride, pad;
  int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  int rows() const { return channels * kernel * kernel; }
  int cols() const { return out_h() * out_w(); }
};

// Output columns [lo, hi) whose input column x * stride - pad + kj lands
// inside [0, width).
inline void ValidRange(int out, int stride, int offset, int extent, int& lo,
                       int& hi) {
  lo = offset >= 0 ? 0 : (-offset + stride - 1) / stride;
  hi = (extent - 1 - offset) < 0 ? 0 : (extent - 1 - offset) / stride + 1;
  if (hi > out) hi = out;
  if (lo > hi) lo = hi;
}

void Im2Col(const ConvGeometry& g, const double* image, double* cols) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        double* row =
            cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) *
                       oh * ow;
        int x_lo, x_hi;
        ValidRange(ow, g.stride, kj - g.pad, g.width, x_lo, x_hi);
        for (int y = 0; y < oh; ++y) {
          double* out = row + y * ow;
          const int iy = y * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          const double* src = image +
                              (static_cast<std::size_t>(c) * g.height + iy) * g.width +
                              (kj - g.pad);
          std::fill(out, out + x_lo, 0.0);
          if (g.stride == 1) {
            std::copy(src + x_lo, src + x_hi, out + x_lo);
          } else {
            for (int x = x_lo; x < x_hi; ++x) out[x] = src[x * g.stride];
          }
          std::fill(out + x_hi, out + ow, 0.0);
        }
      }
    }
  }
}

// Adjoint of Im2Col: scatters-adds columns back onto `image`.
void Col2Im(const ConvGeometry& g, const double* cols, double* image) {
  const int oh = g.out_h(), ow = g.out_w();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const double* row =
            cols + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) *
                       oh * ow;
        int x_lo, x_hi;
        ValidRange(ow, g.stride, kj - g.pad, g.width, x_lo, x_hi);
        for (int y = 0; y < oh; ++y) {
          const int iy = y * g.stride - g.pad + ki;
          if (iy < 0 || iy >= g.height) continue;
          double* dst = image +
                        (static_cast<std::size_t>(c) * g.height + iy) * g.width +
                        (kj - g.pad);
          const double* in = row + y * ow;
          for (int x = x_lo; x < x_hi; ++x) dst[x * g.stride] += in[x];
        }
      }
    }
  }
}

void Accumulate(Tape& tape, int id, const Tensor& delta) {
  Tensor& g = tape.MutableGrad(id);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += delta[i];
}

template <typename Fwd, typename Deriv>
Var Elementwise(Var x, Fwd fwd, Deriv deriv) {
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  Tensor out = Tensor::Uninitialized(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  const int xi = x.id;
  return tape.Push(std::move(out), {xi}, [xi, deriv](Tape& t, int self) {
    const Tensor& in = t.value(xi);
    const Tensor& y = t.value(self);
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.MutableGrad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      gx[i] += gy[i] * deriv(in[i], y[i]);
    }
  });
}

void RequireSameShape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.ShapeString() +
                     " vs " + b.ShapeString());
  }
}

}  // namespace

std::size_t ParamCount(const ParamSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

Var Tape::Leaf(const Tensor& value, bool requires_grad) {
  Node node;
  node.external = &value;
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::Constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

std::vector<Var> Tape::Bind(const ParamSet& params, bool requires_grad) {
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(Leaf(p.value, requires_grad));
  return vars;
}

const Tensor& Tape::value(Var v) const { return value(v.id); }

const Tensor& Tape::value(int id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

const Tensor& Tape::grad(Var v) const {
  return v.id >= 0 ? nodes_[v.id].grad : kEmpty;
}

Tensor Tape::TakeGrad(Var v) { return std::move(nodes_[v.id].grad); }

Tensor& Tape::MutableGrad(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(value(id).shape(), 0.0);
  return n.grad;
}

Var Tape::Push(Tensor value, std::vector<int> parents, BackwardFn backward,
               bool differentiable) {
  Node node;
  node.owned = std::move(value);
  for (int p : parents) node.requires_grad |= nodes_[p].requires_grad;
  node.differentiable = differentiable;
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Tape::Backward(Var loss) {
  if (value(loss).size() != 1) {
    throw ShapeError("Backward needs a one-element loss, got " +
                     value(loss).ShapeString());
  }
  MutableGrad(loss.id)[0] = 1.0;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.grad.empty() || !n.requires_grad) continue;
    if (!n.differentiable) {
      throw NonDifferentiableError(
          "backward pass reached a non-differentiable op (node " +
          std::to_string(id) + ")");
    }
    if (n.backward) n.backward(*this, id);
  }
}

namespace ops {

Var Conv2d(Var x, Var w, Var b, int stride, int pad) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(1) != xv.dim(0) ||
      wv.dim(2) != wv.dim(3) || bv.size() != static_cast<std::size_t>(wv.dim(0))) {
    throw ShapeError("Conv2d: incompatible input " + xv.ShapeString() +
                     " / weight " + wv.ShapeString());
  }
  const ConvGeometry g{xv.dim(0), xv.dim(1), xv.dim(2), wv.dim(2), stride, pad};
  const int cout = wv.dim(0);
  if (g.out_h() <= 0 || g.out_w() <= 0) {
    throw ShapeError("Conv2d: kernel larger than padded input");
  }
  auto cols = std::make_shared<Buffer>(static_cast<std::size_t>(g.rows()) *
                                      g.cols());
  Im2Col(g, xv.data(), cols->data());
  Tensor out = Tensor::Uninitialized({cout, g.out_h(), g.out_w()});
  MapMat o(out.data(), cout, g.cols());
  o.noalias() = ConstMapMat(wv.data(), cout, g.rows()) *
                ConstMapMat(cols->data(), g.rows(), g.cols());
  for (int c = 0; c < cout; ++c) o.row(c).array() += bv[c];

  const int xi = x.id, wi = w.id, bi = b.id;
  return tape.Push(
      std::move(out), {xi, wi, bi},
      [g, cout, cols, xi, wi, bi](Tape& t, int self) {
        ConstMapMat gy(t.grad(self).data(), cout, g.cols());
        if (t.requires_grad(wi)) {
          MapMat(t.MutableGrad(wi).data(), cout, g.rows()).noalias() +=
              gy * ConstMapMat(cols->data(), g.rows(), g.cols()).transpose();
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.MutableGrad(bi);
          for (int c = 0; c < cout; ++c) gb[c] += gy.row(c).sum();
        }
        if (t.requires_grad(xi)) {
          RowMat dcols = ConstMapMat(t.value(wi).data(), cout, g.rows())
                             .transpose() *
                         gy;
          Col2Im(g, dcols.data(), t.MutableGrad(xi).data());
        }
      });
}

Var ConvTranspose2d(Var x, Var w, Var b, int stride, int pad) {
  Tape& tape = *x.tape;
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  const Tensor& bv = tape.value(b);
  if (xv.rank() != 3 || wv.rank() != 4 || wv.dim(0) != xv.dim(0) ||
      wv.dim(2) != wv.dim(3) || bv.size() != static_cast<std::size_t>(wv.dim(1))) {
    throw ShapeError("ConvTranspose2d: incompatible input " + xv.ShapeString() +
                     " / weight " + wv.ShapeString());
  }
  const int cin = xv.dim(0), cout = wv.dim(1), k = wv.dim(2);
  const int oh = (xv.dim(1) - 1) * stride - 2 * pad + k;
  const int ow = (xv.dim(2) - 1) * stride - 2 * pad + k;
  if (oh <= 0 || ow <= 0) throw ShapeError("ConvTranspose2d: empty output");
  // The forward map is the adjoint of a convolution over the output image.
  const ConvGeometry g{cout, oh, ow, k, stride, pad};
  const int hw = xv.dim(1) * xv.dim(2);
  if (g.out_h() * g.out_w() != hw) {
    throw ShapeError("ConvTranspose2d: geometry is not invertible");
  }
  RowMat cols = ConstMapMat(wv.data(), cin, g.rows()).transpose() *
                ConstMapMat(xv.data(), cin, hw);
  Tensor out({cout, oh, ow}, 0.0);
  Col2Im(g, cols.data(), out.data());
  const std::size_t plane = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < cout; ++c) {
    for (std::size_t i = 0; i < plane; ++i) out[c * plane + i] += bv[c];
  }

  const int xi = x.id, wi = w.id, bi = b.id;
  return tape.Push(
      std::move(out), {xi, wi, bi},
      [g, cin, cout, hw, plane, xi, wi, bi](Tape& t, int self) {
        const Tensor& gy = t.grad(self);
        RowMat dcols(g.rows(), hw);
        Im2Col(g, gy.data(), dcols.data());
        if (t.requires_grad(wi)) {
          MapMat(t.MutableGrad(wi).data(), cin, g.rows()).noalias() +=
              ConstMapMat(t.value(xi).data(), cin, hw) * dcols.transpose();
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.MutableGrad(bi);
          for (int c = 0; c < cout; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < plane; ++i) s += gy[c * plane + i];
            gb[c] += s;
          }
        }
        if (t.requires_grad(xi)) {
          MapMat(t.MutableGrad(xi).data(), cin, hw).noalias() +=
              ConstMapMat(t.value(wi).data(), cin, g.rows()) * dcols;
        }
      });
}

Var Relu(Var x) {
  return Elementwise(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Var LeakyRelu(Var x, double slope) {
  return Elementwise(
      x, [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Var Tanh(Var x) {
  return Elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Var Sigmoid(Var x) {
  return Elementwise(
      x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var Dropout(Var x, double p, Rng& rng) {
  if (p <= 0.0) return x;
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<Buffer>(in.size());
  Tensor out = Tensor::Uninitialized(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) {
    (*mask)[i] = rng.Uniform() >= p ? keep_scale : 0.0;
    out[i] = in[i] * (*mask)[i];
  }
  const int xi = x.id;
  return tape.Push(std::move(out), {xi}, [xi, mask](Tape& t, int self) {
    const Tensor& gy = t.grad(self);
    Tensor& gx = t.MutableGrad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * (*mask)[i];
  });
}

Var ConcatChannels(Var a, Var b) {
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  if (av.rank() != 3 || bv.rank() != 3 || av.dim(1) != bv.dim(1) ||
      av.dim(2) != bv.dim(2)) {
    throw ShapeError("ConcatChannels: " + av.ShapeString() + " vs " +
                     bv.ShapeString());
  }
  Tensor out =
      Tensor::Uninitialized({av.dim(0) + bv.dim(0), av.dim(1), av.dim(2)});
  std::copy(av.data(), av.data() + av.size(), out.data());
  std::copy(bv.data(), bv.data() + bv.size(), out.data() + av.size());
  const std::size_t na = av.size();
  const int ai = a.id, bi = b.id;
  return tape.Push(
      std::move(out), {ai, bi}, [ai, bi, na](Tape& t, int self) {
        const Tensor& gy = t.grad(self);
        if (t.requires_grad(ai)) {
          Tensor& ga = t.MutableGrad(ai);
          for (std::size_t i = 0; i < na; ++i) ga[i] += gy[i];
        }
        if (t.requires_grad(bi)) {
          Tensor& gb = t.MutableGrad(bi);
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gy[na + i];
        }
      });
}

Var Add(Var a, Var b) {
  Tape& tape = *a.tape;
  RequireSameShape(tape.value(a), tape.value(b), "Add");
  Tensor out = tape.value(a);
  const Tensor& bv = tape.value(b);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const int ai = a.id, bi = b.id;
  return tape.Push(std::move(out), {ai, bi}, [ai, bi](Tape& t, int self) {
    if (t.requires_grad(ai)) Accumulate(t, ai, t.grad(self));
    if (t.requires_grad(bi)) Accumulate(t, bi, t.grad(self));
  });
}

Var Sub(Var a, Var b) { return Add(a, Scale(b, -1.0)); }

Var Scale(Var x, double factor) {
  return Elementwise(
      x, [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Var AddScalar(Var x, double c) {
  return Elementwise(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Var Clamp(Var x, double lo, double hi) {
  return Elementwise(
      x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

Var Log(Var x) {
  return Elementwise(
      x, [](double v) { return std::log(v); },
      [](double v, double) { return 1.0 / v; });
}

Var Mean(Var x) {
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  double s = 0.0;
  for (double v : in.values()) s += v;
  const double n = static_cast<double>(in.size());
  const int xi = x.id;
  return tape.Push(Tensor::Scalar(s / n), {xi}, [xi, n](Tape& t, int self) {
    const double g = t.grad(self)[0] / n;
    Tensor& gx = t.MutableGrad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

Var SumSquares(Var x) {
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  double s = 0.0;
  for (double v : in.values()) s += v * v;
  const int xi = x.id;
  return tape.Push(Tensor::Scalar(s), {xi}, [xi](Tape& t, int self) {
    const double g = t.grad(self)[0];
    const Tensor& in = t.value(xi);
    Tensor& gx = t.MutableGrad(xi);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += 2.0 * g * in[i];
  });
}

Var MeanAbsDiff(Var a, Var b) {
  Tape& tape = *a.tape;
  const Tensor& av = tape.value(a);
  const Tensor& bv = tape.value(b);
  RequireSameShape(av, bv, "MeanAbsDiff");
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += std::abs(av[i] - bv[i]);
  const double n = static_cast<double>(av.size());
  const int ai = a.id, bi = b.id;
  return tape.Push(Tensor::Scalar(s / n), {ai, bi}, [ai, bi, n](Tape& t,
                                                              int self) {
    const double g = t.grad(self)[0] / n;
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    auto sign = [](double d) { return d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); };
    if (t.requires_grad(ai)) {
      Tensor& ga = t.MutableGrad(ai);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * sign(av[i] - bv[i]);
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.MutableGrad(bi);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * sign(av[i] - bv[i]);
    }
  });
}

Var Heaviside(Var x) {
  Tape& tape = *x.tape;
  const Tensor& in = tape.value(x);
  Tensor out = Tensor::Uninitialized(in.shape());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] > 0.0 ? 1.0 : 0.0;
  return tape.Push(std::move(out), {x.id}, nullptr, /*differentiable=*/false);
}

}  // namespace ops

GradientResult Gradient(
    const std::function<Var(Tape&, const std::vector<Var>&)>& loss_fn,
    const ParamSet& params) {
  Tape tape;
  const std::vector<Var> leaves = tape.Bind(params, true);
  const Var loss = loss_fn(tape, leaves);
  GradientResult result;
  result.loss = tape.value(loss)[0];
  if (tape.requires_grad(loss)) tape.Backward(loss);
  result.grads.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor g = tape.TakeGrad(leaves[i]);
    result.grads.push_back(g.empty() ? Tensor(params[i].value.shape(), 0.0)
                                     : std::move(g));
  }
  return result;
}

}  // namespace privtrans
