#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace simshear::nn {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Eigen peels unaligned heads off vectorized reductions, so the summation
/// order (and the float result) depends on where a buffer lands. Aligned
/// storage keeps training bit-reproducible.
using FloatVec = std::vector<float, Eigen::aligned_allocator<float>>;

/// Dense NCHW float tensor. Fully connected activations use h = w = 1.
struct Tensor {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;
  FloatVec data;

  Tensor() = default;
  Tensor(int n, int c, int h, int w, float fill = 0.0f)
      : n(n), c(c), h(h), w(w), data(static_cast<size_t>(n) * c * h * w, fill) {}

  size_t size() const { return data.size(); }
  int plane() const { return h * w; }
  int per_sample() const { return c * h * w; }
  float* sample(int i) { return data.data() + static_cast<size_t>(i) * per_sample(); }
  const float* sample(int i) const { return data.data() + static_cast<size_t>(i) * per_sample(); }
  float& at(int ni, int ci, int y, int x) {
    return data[((static_cast<size_t>(ni) * c + ci) * h + y) * w + x];
  }
  float at(int ni, int ci, int y, int x) const {
    return data[((static_cast<size_t>(ni) * c + ci) * h + y) * w + x];
  }
  /// Sample i as a (c, h*w) row-major matrix.
  MatrixMap mat(int i) { return MatrixMap(sample(i), c, plane()); }
  ConstMatrixMap mat(int i) const { return ConstMatrixMap(sample(i), c, plane()); }
  /// Whole tensor as (n, c*h*w).
  MatrixMap flat() { return MatrixMap(data.data(), n, per_sample()); }
  ConstMatrixMap flat() const { return ConstMatrixMap(data.data(), n, per_sample()); }

  bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
  std::string shape_string() const;
  void fill(float v) { std::fill(data.begin(), data.end(), v); }
};

/// Channel-wise concatenation of two tensors with equal n, h, w.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Inverse of concat_channels for a gradient: first `ca` channels to a.
void split_channels(const Tensor& g, int ca, Tensor& ga, Tensor& gb);

/// Rows `idx` of a batch.
Tensor gather(const Tensor& t, const std::vector<int>& idx);

}  // namespace simshear::nn
