#pragma once

#include <memory>
#include <string>
#include <vector>

#include "simshear/nn/tensor.h"
#include "simshear/rng.h"

namespace simshear::nn {

/// Trainable array with its gradient accumulator.
struct Param {
  std::string name;
  FloatVec value;
  FloatVec grad;

  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }
};

/// Named float array saved in checkpoints (parameters and running stats).
struct StateEntry {
  std::string name;
  FloatVec* data;
};

/// Layer with an explicit backward pass. forward(train = true) caches what
/// backward needs; backward accumulates parameter gradients and returns the
/// gradient with respect to the input of the most recent forward.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool train) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void params(std::vector<Param*>&) {}
  virtual void state(std::vector<StateEntry>& out);
  const std::string& name() const { return name_; }

 protected:
  std::string name_;
};

/// Torch-style default init: U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void uniform_init(Param& p, int fan_in, Rng& rng);

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int cin, int cout, int kernel, int stride, int pad, Rng& rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void params(std::vector<Param*>& out) override;
  int out_size(int in) const { return (in + 2 * pad_ - k_) / stride_ + 1; }

  Param weight;  // (cout, cin*k*k)
  Param bias;    // (cout)

 private:
  int cin_, cout_, k_, stride_, pad_;
  int in_h_ = 0, in_w_ = 0;
  std::vector<RowMatrix> cols_;
};

class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::string name, int cin, int cout, int kernel, int stride, int pad, Rng& rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void params(std::vector<Param*>& out) override;
  int out_size(int in) const { return (in - 1) * stride_ - 2 * pad_ + k_; }

  Param weight;  // (cin, cout*k*k)
  Param bias;    // (cout)

 private:
  int cin_, cout_, k_, stride_, pad_;
  Tensor input_;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void params(std::vector<Param*>& out) override;
  void state(std::vector<StateEntry>& out) override;

  Param gamma;
  Param beta;
  FloatVec running_mean;
  FloatVec running_var;

 private:
  int c_;
  float momentum_, eps_;
  bool cached_train_ = false;
  Tensor xhat_;
  FloatVec inv_std_;
};

class Linear : public Layer {
 public:
  Linear(std::string name, int in, int out, Rng& rng);
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;
  void params(std::vector<Param*>& out) override;

  Param weight;  // (out, in)
  Param bias;

 private:
  int in_, out_;
  Tensor input_;
};

/// slope 0 gives a ReLU.
class LeakyReLU : public Layer {
 public:
  LeakyReLU(std::string name, float slope) : Layer(std::move(name)), slope_(slope) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  float slope_;
  Tensor input_;
};

class Sigmoid : public Layer {
 public:
  explicit Sigmoid(std::string name) : Layer(std::move(name)) {}
  Tensor forward(const Tensor& x, bool train) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor output_;
};

/// Layers applied in order.
class Sequential {
 public:
  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  Tensor forward(const Tensor& x, bool train);
  Tensor backward(const Tensor& grad_out);
  void params(std::vector<Param*>& out);
  void state(std::vector<StateEntry>& out);
  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// (n, c, h, w) viewed as (n, c*h*w, 1, 1) and back.
Tensor flatten(const Tensor& x);
Tensor unflatten(const Tensor& x, int c, int h, int w);

}  // namespace simshear::nn
