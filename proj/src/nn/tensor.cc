#include "simshear/nn/tensor.h"

#include <algorithm>
#include <cstring>
#include <stdexcept>

namespace simshear::nn {

std::string Tensor::shape_string() const {
  return "[" + std::to_string(n) + ", " + std::to_string(c) + ", " + std::to_string(h) + ", " +
         std::to_string(w) + "]";
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw std::invalid_argument("concat of " + a.shape_string() + " and " + b.shape_string());
  Tensor out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::memcpy(out.sample(i), a.sample(i), sizeof(float) * a.per_sample());
    std::memcpy(out.sample(i) + a.per_sample(), b.sample(i), sizeof(float) * b.per_sample());
  }
  return out;
}

void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb) {
  ga = Tensor(g.n, ca, g.h, g.w);
  gb = Tensor(g.n, g.c - ca, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::memcpy(ga.sample(i), g.sample(i), sizeof(float) * ga.per_sample());
    std::memcpy(gb.sample(i), g.sample(i) + ga.per_sample(), sizeof(float) * gb.per_sample());
  }
}

Tensor gather(const Tensor& t, const std::vector<int>& idx) {
  Tensor out(static_cast<int>(idx.size()), t.c, t.h, t.w);
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= t.n) throw std::out_of_range("gather index out of range");
    std::memcpy(out.sample(static_cast<int>(i)), t.sample(idx[i]), sizeof(float) * t.per_sample());
  }
  return out;
}

}  // namespace simshear::nn
