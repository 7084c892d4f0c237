#ifndef PRIVTRANS_ADAM_H_
#define PRIVTRANS_ADAM_H_

#include <vector>

#include "privtrans/autodiff.h"

namespace privtrans {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a ParamSet. One instance per network.
class Adam {
 public:
  Adam(const ParamSet& params, AdamConfig config);

  void Step(ParamSet& params, const std::vector<Tensor>& grads);
  long steps() const { return t_; }

 private:
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  long t_ = 0;
};

}  // namespace privtrans

#endif  // PRIVTRANS_ADAM_H_
