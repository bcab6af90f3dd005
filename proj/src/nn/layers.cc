#include "simshear/nn/layers.h"

#include <cmath>
#include <stdexcept>

namespace simshear::nn {
namespace {

Param make_param(const std::string& name, size_t n) {
  return Param{name, FloatVec(n, 0.0f), FloatVec(n, 0.0f)};
}

// cols (C*k*k, oh*ow) from one image plane stack (C, H, W).
void im2col(const float* im, int channels, int height, int width, int k, int stride, int pad,
            float* cols) {
  const int oh = (height + 2 * pad - k) / stride + 1;
  const int ow = (width + 2 * pad - k) / stride + 1;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        float* row = cols + static_cast<size_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride - pad + ky;
          float* out = row + oy * ow;
          if (y < 0 || y >= height) {
            std::fill(out, out + ow, 0.0f);
            continue;
          }
          const float* src = im + (static_cast<size_t>(c) * height + y) * width;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride - pad + kx;
            out[ox] = (x >= 0 && x < width) ? src[x] : 0.0f;
          }
        }
      }
}

// Accumulates cols back onto a zero-initialized (C, H, W) image.
void col2im(const float* cols, int channels, int height, int width, int k, int stride, int pad,
            float* im) {
  const int oh = (height + 2 * pad - k) / stride + 1;
  const int ow = (width + 2 * pad - k) / stride + 1;
  for (int c = 0; c < channels; ++c)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        const float* row = cols + static_cast<size_t>((c * k + ky) * k + kx) * oh * ow;
        for (int oy = 0; oy < oh; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= height) continue;
          float* dst = im + (static_cast<size_t>(c) * height + y) * width;
          const float* in = row + oy * ow;
          for (int ox = 0; ox < ow; ++ox) {
            const int x = ox * stride - pad + kx;
            if (x >= 0 && x < width) dst[x] += in[ox];
          }
        }
      }
}

void check_channels(const Tensor& x, int expected, const std::string& layer) {
  if (x.c != expected)
    throw std::invalid_argument(layer + ": expected " + std::to_string(expected) +
                                " channels, got " + x.shape_string());
}

}  // namespace

void Layer::state(std::vector<StateEntry>& out) {
  std::vector<Param*> ps;
  params(ps);
  for (Param* p : ps) out.push_back({p->name, &p->value});
}

void uniform_init(Param& p, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (float& v : p.value) v = static_cast<float>(rng.uniform(-bound, bound));
}

Conv2d::Conv2d(std::string name, int cin, int cout, int kernel, int stride, int pad, Rng& rng)
    : Layer(std::move(name)), cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
  weight = make_param(name_ + ".weight", static_cast<size_t>(cout) * cin * kernel * kernel);
  bias = make_param(name_ + ".bias", cout);
  uniform_init(weight, cin * kernel * kernel, rng);
  uniform_init(bias, cin * kernel * kernel, rng);
}

void Conv2d::params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor Conv2d::forward(const Tensor& x, bool train) {
  check_channels(x, cin_, name_);
  if (train) {
    in_h_ = x.h;
    in_w_ = x.w;
  }
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  const int kk = cin_ * k_ * k_;
  Tensor y(x.n, cout_, oh, ow);
  ConstMatrixMap wmat(weight.value.data(), cout_, kk);
  Eigen::Map<const Eigen::VectorXf> b(bias.value.data(), cout_);
  if (train) cols_.assign(x.n, RowMatrix());
  RowMatrix scratch;
  for (int i = 0; i < x.n; ++i) {
    RowMatrix& cols = train ? cols_[i] : scratch;
    cols.resize(kk, oh * ow);
    im2col(x.sample(i), cin_, x.h, x.w, k_, stride_, pad_, cols.data());
    y.mat(i).noalias() = wmat * cols;
    y.mat(i).colwise() += b;
  }
  return y;
}

Tensor Conv2d::backward(const Tensor& g) {
  if (cols_.size() != static_cast<size_t>(g.n))
    throw std::logic_error(name_ + ": backward without a training forward");
  const int kk = cin_ * k_ * k_;
  MatrixMap dw(weight.grad.data(), cout_, kk);
  ConstMatrixMap wmat(weight.value.data(), cout_, kk);
  Eigen::Map<Eigen::VectorXf> db(bias.grad.data(), cout_);
  Tensor dx(g.n, cin_, in_h_, in_w_);
  RowMatrix dcols;
  for (int i = 0; i < g.n; ++i) {
    const auto gm = g.mat(i);
    dw.noalias() += gm * cols_[i].transpose();
    db += gm.rowwise().sum();
    dcols.noalias() = wmat.transpose() * gm;
    col2im(dcols.data(), cin_, in_h_, in_w_, k_, stride_, pad_, dx.sample(i));
  }
  return dx;
}

ConvTranspose2d::ConvTranspose2d(std::string name, int cin, int cout, int kernel, int stride,
                                 int pad, Rng& rng)
    : Layer(std::move(name)), cin_(cin), cout_(cout), k_(kernel), stride_(stride), pad_(pad) {
  weight = make_param(name_ + ".weight", static_cast<size_t>(cin) * cout * kernel * kernel);
  bias = make_param(name_ + ".bias", cout);
  // Torch computes fan-in of a transposed conv from weight dim 1 (= cout).
  uniform_init(weight, cout * kernel * kernel, rng);
  uniform_init(bias, cout * kernel * kernel, rng);
}

void ConvTranspose2d::params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor ConvTranspose2d::forward(const Tensor& x, bool train) {
  check_channels(x, cin_, name_);
  if (train) input_ = x;
  const int oh = out_size(x.h);
  const int ow = out_size(x.w);
  const int kk = cout_ * k_ * k_;
  Tensor y(x.n, cout_, oh, ow);
  ConstMatrixMap wmat(weight.value.data(), cin_, kk);
  RowMatrix cols;
  for (int i = 0; i < x.n; ++i) {
    cols.noalias() = wmat.transpose() * x.mat(i);
    col2im(cols.data(), cout_, oh, ow, k_, stride_, pad_, y.sample(i));
    y.mat(i).colwise() += Eigen::Map<const Eigen::VectorXf>(bias.value.data(), cout_);
  }
  return y;
}

Tensor ConvTranspose2d::backward(const Tensor& g) {
  if (input_.n != g.n) throw std::logic_error(name_ + ": backward without a training forward");
  const int kk = cout_ * k_ * k_;
  const int h = input_.h;
  const int w = input_.w;
  MatrixMap dw(weight.grad.data(), cin_, kk);
  ConstMatrixMap wmat(weight.value.data(), cin_, kk);
  Eigen::Map<Eigen::VectorXf> db(bias.grad.data(), cout_);
  Tensor dx(g.n, cin_, h, w);
  RowMatrix dcols(kk, h * w);
  for (int i = 0; i < g.n; ++i) {
    im2col(g.sample(i), cout_, g.h, g.w, k_, stride_, pad_, dcols.data());
    dx.mat(i).noalias() = wmat * dcols;
    dw.noalias() += input_.mat(i) * dcols.transpose();
    db += g.mat(i).rowwise().sum();
  }
  return dx;
}

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : Layer(std::move(name)), c_(channels), momentum_(momentum), eps_(eps) {
  gamma = make_param(name_ + ".weight", channels);
  beta = make_param(name_ + ".bias", channels);
  std::fill(gamma.value.begin(), gamma.value.end(), 1.0f);
  running_mean.assign(channels, 0.0f);
  running_var.assign(channels, 1.0f);
}

void BatchNorm2d::params(std::vector<Param*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

void BatchNorm2d::state(std::vector<StateEntry>& out) {
  Layer::state(out);
  out.push_back({name_ + ".running_mean", &running_mean});
  out.push_back({name_ + ".running_var", &running_var});
}

Tensor BatchNorm2d::forward(const Tensor& x, bool train) {
  check_channels(x, c_, name_);
  const int p = x.plane();
  const double m = static_cast<double>(x.n) * p;
  Tensor y(x.n, x.c, x.h, x.w);
  // Eval mode touches no member state, so frozen inference is thread-safe.
  if (train) {
    cached_train_ = true;
    inv_std_.assign(c_, 0.0f);
    xhat_ = Tensor(x.n, x.c, x.h, x.w);
  }
  for (int ch = 0; ch < c_; ++ch) {
    double mean;
    double var;
    if (train) {
      double s = 0.0;
      double s2 = 0.0;
      for (int i = 0; i < x.n; ++i) {
        const float* v = x.sample(i) + static_cast<size_t>(ch) * p;
        for (int j = 0; j < p; ++j) s += v[j];
      }
      mean = s / m;
      for (int i = 0; i < x.n; ++i) {
        const float* v = x.sample(i) + static_cast<size_t>(ch) * p;
        for (int j = 0; j < p; ++j) s2 += (v[j] - mean) * (v[j] - mean);
      }
      var = s2 / m;
      const double unbiased = m > 1 ? s2 / (m - 1) : var;
      running_mean[ch] = static_cast<float>((1 - momentum_) * running_mean[ch] + momentum_ * mean);
      running_var[ch] = static_cast<float>((1 - momentum_) * running_var[ch] + momentum_ * unbiased);
    } else {
      mean = running_mean[ch];
      var = running_var[ch];
    }
    const float inv = static_cast<float>(1.0 / std::sqrt(var + eps_));
    if (train) inv_std_[ch] = inv;
    const float g = gamma.value[ch];
    const float b = beta.value[ch];
    const float mu = static_cast<float>(mean);
    for (int i = 0; i < x.n; ++i) {
      const float* v = x.sample(i) + static_cast<size_t>(ch) * p;
      float* out = y.sample(i) + static_cast<size_t>(ch) * p;
      float* xh = train ? xhat_.sample(i) + static_cast<size_t>(ch) * p : nullptr;
      for (int j = 0; j < p; ++j) {
        const float h = (v[j] - mu) * inv;
        if (xh) xh[j] = h;
        out[j] = g * h + b;
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& g) {
  if (!cached_train_ || !g.same_shape(xhat_))
    throw std::logic_error(name_ + ": backward without a training forward");
  const int p = g.plane();
  const double m = static_cast<double>(g.n) * p;
  Tensor dx(g.n, g.c, g.h, g.w);
  for (int ch = 0; ch < c_; ++ch) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (int i = 0; i < g.n; ++i) {
      const float* dy = g.sample(i) + static_cast<size_t>(ch) * p;
      const float* xh = xhat_.sample(i) + static_cast<size_t>(ch) * p;
      for (int j = 0; j < p; ++j) {
        sum_dy += dy[j];
        sum_dy_xhat += dy[j] * xh[j];
      }
    }
    gamma.grad[ch] += static_cast<float>(sum_dy_xhat);
    beta.grad[ch] += static_cast<float>(sum_dy);
    const double scale = gamma.value[ch] * inv_std_[ch] / m;
    for (int i = 0; i < g.n; ++i) {
      const float* dy = g.sample(i) + static_cast<size_t>(ch) * p;
      const float* xh = xhat_.sample(i) + static_cast<size_t>(ch) * p;
      float* out = dx.sample(i) + static_cast<size_t>(ch) * p;
      for (int j = 0; j < p; ++j)
        out[j] = static_cast<float>(scale * (m * dy[j] - sum_dy - xh[j] * sum_dy_xhat));
    }
  }
  return dx;
}

Linear::Linear(std::string name, int in, int out, Rng& rng)
    : Layer(std::move(name)), in_(in), out_(out) {
  weight = make_param(name_ + ".weight", static_cast<size_t>(in) * out);
  bias = make_param(name_ + ".bias", out);
  uniform_init(weight, in, rng);
  uniform_init(bias, in, rng);
}

void Linear::params(std::vector<Param*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

Tensor Linear::forward(const Tensor& x, bool train) {
  if (x.per_sample() != in_)
    throw std::invalid_argument(name_ + ": expected " + std::to_string(in_) + " features, got " +
                                x.shape_string());
  if (train) input_ = x;
  Tensor y(x.n, out_, 1, 1);
  ConstMatrixMap wmat(weight.value.data(), out_, in_);
  y.flat().noalias() = x.flat() * wmat.transpose();
  y.flat().rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.value.data(), out_);
  return y;
}

Tensor Linear::backward(const Tensor& g) {
  if (input_.n != g.n) throw std::logic_error(name_ + ": backward without a training forward");
  MatrixMap dw(weight.grad.data(), out_, in_);
  ConstMatrixMap wmat(weight.value.data(), out_, in_);
  dw.noalias() += g.flat().transpose() * input_.flat();
  Eigen::Map<Eigen::RowVectorXf>(bias.grad.data(), out_) += g.flat().colwise().sum();
  Tensor dx(input_.n, input_.c, input_.h, input_.w);
  dx.flat().noalias() = g.flat() * wmat;
  return dx;
}

Tensor LeakyReLU::forward(const Tensor& x, bool train) {
  if (train) input_ = x;
  Tensor y = x;
  for (float& v : y.data) v = v > 0.0f ? v : slope_ * v;
  return y;
}

Tensor LeakyReLU::backward(const Tensor& g) {
  if (!g.same_shape(input_)) throw std::logic_error(name_ + ": backward without a training forward");
  Tensor dx = g;
  for (size_t i = 0; i < dx.size(); ++i)
    if (!(input_.data[i] > 0.0f)) dx.data[i] *= slope_;
  return dx;
}

Tensor Sigmoid::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (float& v : y.data) v = 1.0f / (1.0f + std::exp(-v));
  if (train) output_ = y;
  return y;
}

Tensor Sigmoid::backward(const Tensor& g) {
  if (!g.same_shape(output_)) throw std::logic_error(name_ + ": backward without a training forward");
  Tensor dx = g;
  for (size_t i = 0; i < dx.size(); ++i) dx.data[i] *= output_.data[i] * (1.0f - output_.data[i]);
  return dx;
}

Tensor Sequential::forward(const Tensor& x, bool train) {
  Tensor y = x;
  for (auto& l : layers_) y = l->forward(y, train);
  return y;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::params(std::vector<Param*>& out) {
  for (auto& l : layers_) l->params(out);
}

void Sequential::state(std::vector<StateEntry>& out) {
  for (auto& l : layers_) l->state(out);
}

Tensor flatten(const Tensor& x) {
  Tensor y;
  y.n = x.n;
  y.c = x.per_sample();
  y.h = 1;
  y.w = 1;
  y.data = x.data;
  return y;
}

Tensor unflatten(const Tensor& x, int c, int h, int w) {
  if (x.per_sample() != c * h * w) throw std::invalid_argument("unflatten size mismatch");
  Tensor y;
  y.n = x.n;
  y.c = c;
  y.h = h;
  y.w = w;
  y.data = x.data;
  return y;
}

}  // namespace simshear::nn
