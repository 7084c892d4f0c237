#include "privtrans/adam.h"

#include <cmath>

#include "privtrans/errors.h"

namespace privtrans {

Adam::Adam(const ParamSet& params, AdamConfig config) : config_(config) {
  if (!(config.lr > 0.0)) throw ConfigError("learning rate must be positive");
  for (const auto& p : params) {
    m_.emplace_back(p.value.shape(), 0.0);
    v_.emplace_back(p.value.shape(), 0.0);
  }
}

void Adam::Step(ParamSet& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size() || params.size() != m_.size()) {
    throw ShapeError("Adam::Step: gradient list does not match parameters");
  }
  ++t_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  const double step = config_.lr * std::sqrt(c2) / c1;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (grads[k].size() != params[k].value.size()) {
      throw ShapeError("Adam::Step: gradient shape mismatch for " +
                       params[k].name);
    }
    double* __restrict w = params[k].value.data();
    double* __restrict m = m_[k].data();
    double* __restrict v = v_[k].data();
    const double* __restrict g = grads[k].data();
    const std::size_t n = params[k].value.size();
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double eps = config_.eps * std::sqrt(c2);
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i]) + eps);
    }
  }
}

}  // namespace privtrans
