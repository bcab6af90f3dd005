#pragma once

#include <vector>

#include "simshear/nn/layers.h"

namespace simshear::nn {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction.
class Adam {
 public:
  Adam(std::vector<Param*> params, AdamOptions options);
  void zero_grad();
  void step();
  long steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  AdamOptions opt_;
  std::vector<FloatVec> m_, v_;
  long t_ = 0;
};

/// True if any gradient entry is NaN or infinite.
bool has_non_finite_grad(const std::vector<Param*>& params);

}  // namespace simshear::nn
