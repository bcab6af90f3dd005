#pragma once

#include <array>
#include <string>
#include <vector>

#include "simshear/json_io.h"
#include "simshear/nn/layers.h"

namespace simshear::translate {

using nn::Tensor;

enum class Variant { kPix2pix, kShPix2pix };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TranslatorConfig {
  Variant variant = Variant::kShPix2pix;
  int image_size = 64;
  std::vector<int> encoder_channels{24, 48, 96, 96};
  /// Width of the shear-injection layer; 0 resolves to the flattened
  /// bottleneck size, the only width the decoder can reshape.
  int bottleneck_fc_width = 0;
  int shear_input_dim = 4;
  /// Batch norm on the inner encoder and all but the last decoder stage.
  bool generator_batchnorm = true;
  int discriminator_base = 16;
  double adversarial_weight = 1.0;
  double reconstruction_weight = 100.0;
  int epochs = 100;
  int batch_size = 16;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.5;
  int patience = 10;
  std::uint64_t seed = 1;

  /// Desk scale trains shorter with a larger step; see README. "desk128"
  /// is the desk schedule at 128x128.
  static TranslatorConfig preset(const std::string& name, Variant variant);

  int bottleneck_size() const { return image_size >> encoder_channels.size(); }
  int flattened_bottleneck() const;
  /// Fills derived fields and checks invariants; throws ConfigError.
  void resolve();
};

Json to_json(const TranslatorConfig& c);
TranslatorConfig translator_config_from_json(const Json& j);

/// U-Net generator. Encoder stages halve the resolution; the decoder mirrors
/// them with skip concatenation and ends in a sigmoid.
class Generator {
 public:
  Generator(const TranslatorConfig& config, Rng& rng);

  /// `shear` is (n, shear_input_dim, 1, 1) scaled to [-1, 1] for shpix2pix
  /// and must be null for pix2pix.
  Tensor forward(const Tensor& sim, const Tensor* shear, bool train);
  /// Accumulates parameter gradients for the last training forward.
  void backward(const Tensor& grad_out);

  void params(std::vector<nn::Param*>& out);
  void state(std::vector<nn::StateEntry>& out);

 private:
  struct Stage {
    std::unique_ptr<nn::Layer> conv;
    std::unique_ptr<nn::Layer> norm;  // may be null
    std::unique_ptr<nn::Layer> act;
  };
  Variant variant_;
  int stages_;
  std::vector<int> channels_;
  int bottleneck_hw_;
  std::vector<Stage> enc_, dec_;
  std::unique_ptr<nn::Linear> fc_;
  std::unique_ptr<nn::LeakyReLU> fc_act_;
  std::vector<int> skip_channels_;
  int shear_dim_;
};

/// Patch discriminator over (sim, candidate) channel pairs.
class Discriminator {
 public:
  Discriminator(const TranslatorConfig& config, Rng& rng);
  Tensor forward(const Tensor& sim, const Tensor& candidate, bool train);
  /// Returns the gradient with respect to the candidate image.
  Tensor backward(const Tensor& grad_scores);
  void params(std::vector<nn::Param*>& out);
  void state(std::vector<nn::StateEntry>& out);
  /// Score map side for a given image side.
  static int output_size(int image_size) { return image_size / 8; }

 private:
  nn::Sequential net_;
};

}  // namespace simshear::translate
