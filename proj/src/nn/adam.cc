#include "simshear/nn/adam.h"

#include <cmath>

namespace simshear::nn {

Adam::Adam(std::vector<Param*> params, AdamOptions options)
    : params_(std::move(params)), opt_(options) {
  for (const Param* p : params_) {
    m_.emplace_back(p->value.size(), 0.0f);
    v_.emplace_back(p->value.size(), 0.0f);
  }
}

void Adam::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const float b1 = static_cast<float>(opt_.beta1);
  const float b2 = static_cast<float>(opt_.beta2);
  const float step = static_cast<float>(opt_.lr / bc1);
  const float sqrt_bc2 = static_cast<float>(std::sqrt(bc2));
  const float eps = static_cast<float>(opt_.eps);
  for (size_t k = 0; k < params_.size(); ++k) {
    Param& p = *params_[k];
    FloatVec& m = m_[k];
    FloatVec& v = v_[k];
    for (size_t i = 0; i < p.value.size(); ++i) {
      const float g = p.grad[i];
      m[i] = b1 * m[i] + (1.0f - b1) * g;
      v[i] = b2 * v[i] + (1.0f - b2) * g * g;
      p.value[i] -= step * m[i] / (std::sqrt(v[i]) / sqrt_bc2 + eps);
    }
  }
}

bool has_non_finite_grad(const std::vector<Param*>& params) {
  for (const Param* p : params)
    for (float g : p->grad)
      if (!std::isfinite(g)) return true;
  return false;
}

}  // namespace simshear::nn
