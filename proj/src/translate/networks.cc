#include "simshear/translate/networks.h"

namespace simshear::translate {

std::string to_string(Variant v) { return v == Variant::kPix2pix ? "pix2pix" : "shpix2pix"; }

Variant variant_from_string(const std::string& name) {
  if (name == "pix2pix") return Variant::kPix2pix;
  if (name == "shpix2pix") return Variant::kShPix2pix;
  throw ConfigError("unknown translator variant '" + name + "' (pix2pix or shpix2pix)");
}

TranslatorConfig TranslatorConfig::preset(const std::string& name, Variant variant) {
  TranslatorConfig c;
  c.variant = variant;
  c.shear_input_dim = variant == Variant::kShPix2pix ? 4 : 0;
  if (name == "desk" || name == "desk128") {
    c.epochs = 25;
    c.learning_rate = 5e-4;
    if (name == "desk128") c.image_size = 128;
  } else if (name == "paper") {
    c.epochs = 100;
    c.learning_rate = 1e-4;
  } else {
    throw ConfigError("unknown translator preset '" + name + "' (desk, desk128 or paper)");
  }
  return c;
}

int TranslatorConfig::flattened_bottleneck() const {
  const int side = bottleneck_size();
  return encoder_channels.back() * side * side;
}

void TranslatorConfig::resolve() {
  if (encoder_channels.size() < 2) throw ConfigError("generator needs at least two encoder stages");
  for (int c : encoder_channels)
    if (c <= 0) throw ConfigError("encoder channel widths must be positive");
  if (image_size < 16 || (image_size % (1 << encoder_channels.size())) != 0)
    throw ConfigError("image_size " + std::to_string(image_size) + " is not divisible by 2^" +
                      std::to_string(encoder_channels.size()));
  if (image_size % 8 != 0) throw ConfigError("discriminator needs image_size divisible by 8");
  if (variant == Variant::kShPix2pix && shear_input_dim <= 0)
    throw ConfigError("shpix2pix needs shear_input_dim > 0");
  if (variant == Variant::kPix2pix && shear_input_dim != 0)
    throw ConfigError("pix2pix takes no shear input (shear_input_dim must be 0)");
  if (bottleneck_fc_width == 0) bottleneck_fc_width = flattened_bottleneck();
  if (bottleneck_fc_width != flattened_bottleneck())
    throw ConfigError("bottleneck_fc_width must equal the flattened bottleneck size " +
                      std::to_string(flattened_bottleneck()));
  if (adversarial_weight < 0.0 || reconstruction_weight < 0.0)
    throw ConfigError("loss weights must be non-negative");
  if (epochs <= 0 || batch_size < 2 || !(learning_rate > 0.0) || patience <= 0)
    throw ConfigError("epochs, patience > 0, batch_size >= 2 and learning_rate > 0 required");
  if (discriminator_base <= 0) throw ConfigError("discriminator_base must be positive");
}

Json to_json(const TranslatorConfig& c) {
  return Json{{"variant", to_string(c.variant)},
              {"image_size", c.image_size},
              {"encoder_channels", c.encoder_channels},
              {"bottleneck_fc_width", c.bottleneck_fc_width},
              {"shear_input_dim", c.shear_input_dim},
              {"generator_batchnorm", c.generator_batchnorm},
              {"discriminator_base", c.discriminator_base},
              {"adversarial_weight", c.adversarial_weight},
              {"reconstruction_weight", c.reconstruction_weight},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"learning_rate", c.learning_rate},
              {"adam_beta1", c.adam_beta1},
              {"patience", c.patience},
              {"seed", c.seed}};
}

TranslatorConfig translator_config_from_json(const Json& j) {
  const Variant variant = variant_from_string(j.value("variant", std::string("shpix2pix")));
  TranslatorConfig c = TranslatorConfig::preset(j.value("preset", std::string("desk")), variant);
  c.image_size = j.value("image_size", c.image_size);
  c.encoder_channels = j.value("encoder_channels", c.encoder_channels);
  c.bottleneck_fc_width = j.value("bottleneck_fc_width", c.bottleneck_fc_width);
  c.shear_input_dim = j.value("shear_input_dim", c.shear_input_dim);
  c.generator_batchnorm = j.value("generator_batchnorm", c.generator_batchnorm);
  c.discriminator_base = j.value("discriminator_base", c.discriminator_base);
  c.adversarial_weight = j.value("adversarial_weight", c.adversarial_weight);
  c.reconstruction_weight = j.value("reconstruction_weight", c.reconstruction_weight);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.resolve();
  return c;
}

Generator::Generator(const TranslatorConfig& config, Rng& rng)
    : variant_(config.variant),
      stages_(static_cast<int>(config.encoder_channels.size())),
      channels_(config.encoder_channels),
      bottleneck_hw_(config.bottleneck_size()),
      shear_dim_(config.shear_input_dim) {
  const int s = stages_;
  int cin = 1;
  for (int i = 0; i < s; ++i) {
    const std::string p = "gen.enc" + std::to_string(i);
    Stage st;
    st.conv = std::make_unique<nn::Conv2d>(p + ".conv", cin, channels_[i], 4, 2, 1, rng);
    if (config.generator_batchnorm && i > 0 && i < s - 1)
      st.norm = std::make_unique<nn::BatchNorm2d>(p + ".bn", channels_[i]);
    st.act = std::make_unique<nn::LeakyReLU>(p + ".act", i < s - 1 ? 0.2f : 0.0f);
    enc_.push_back(std::move(st));
    cin = channels_[i];
  }
  if (variant_ == Variant::kShPix2pix) {
    const int flat = config.flattened_bottleneck();
    fc_ = std::make_unique<nn::Linear>("gen.fc", flat + shear_dim_, config.bottleneck_fc_width, rng);
    fc_act_ = std::make_unique<nn::LeakyReLU>("gen.fc.act", 0.0f);
  }
  for (int j = 0; j < s; ++j) {
    const int i = s - 1 - j;
    const int in = channels_[i] * (j == 0 ? 1 : 2);
    const int out = i > 0 ? channels_[i - 1] : 1;
    const std::string p = "gen.dec" + std::to_string(j);
    Stage st;
    st.conv = std::make_unique<nn::ConvTranspose2d>(p + ".conv", in, out, 4, 2, 1, rng);
    if (config.generator_batchnorm && j < s - 1)
      st.norm = std::make_unique<nn::BatchNorm2d>(p + ".bn", out);
    if (j < s - 1)
      st.act = std::make_unique<nn::LeakyReLU>(p + ".act", 0.0f);
    else
      st.act = std::make_unique<nn::Sigmoid>(p + ".act");
    dec_.push_back(std::move(st));
  }
}

Tensor Generator::forward(const Tensor& sim, const Tensor* shear, bool train) {
  if (variant_ == Variant::kShPix2pix && shear == nullptr)
    throw ConfigError("shpix2pix generator requires a shear vector");
  if (variant_ == Variant::kPix2pix && shear != nullptr)
    throw ConfigError("pix2pix generator does not accept a shear vector");
  if (sim.c != 1) throw ConfigError("generator expects single-channel images");
  std::vector<Tensor> skips;
  Tensor x = sim;
  for (auto& st : enc_) {
    x = st.conv->forward(x, train);
    if (st.norm) x = st.norm->forward(x, train);
    x = st.act->forward(x, train);
    skips.push_back(x);
  }
  if (variant_ == Variant::kShPix2pix) {
    if (shear->n != sim.n || shear->per_sample() != shear_dim_)
      throw ConfigError("shear batch must be (n, " + std::to_string(shear_dim_) + ")");
    const Tensor flat = nn::flatten(x);
    Tensor joined(sim.n, flat.c + shear_dim_, 1, 1);
    for (int n = 0; n < sim.n; ++n) {
      std::copy(flat.sample(n), flat.sample(n) + flat.c, joined.sample(n));
      std::copy(shear->sample(n), shear->sample(n) + shear_dim_, joined.sample(n) + flat.c);
    }
    x = fc_act_->forward(fc_->forward(joined, train), train);
    x = nn::unflatten(x, channels_.back(), bottleneck_hw_, bottleneck_hw_);
  }
  skip_channels_.clear();
  for (int j = 0; j < stages_; ++j) {
    if (j > 0) {
      const Tensor& skip = skips[stages_ - 1 - j];
      skip_channels_.push_back(skip.c);
      x = nn::concat_channels(x, skip);
    }
    auto& st = dec_[j];
    x = st.conv->forward(x, train);
    if (st.norm) x = st.norm->forward(x, train);
    x = st.act->forward(x, train);
  }
  return x;
}

void Generator::backward(const Tensor& grad_out) {
  std::vector<Tensor> skip_grads(stages_);
  Tensor g = grad_out;
  for (int j = stages_ - 1; j >= 0; --j) {
    auto& st = dec_[j];
    g = st.act->backward(g);
    if (st.norm) g = st.norm->backward(g);
    g = st.conv->backward(g);
    if (j > 0) {
      Tensor gx;
      Tensor gs;
      const int skip_c = skip_channels_[j - 1];
      nn::split_channels(g, g.c - skip_c, gx, gs);
      skip_grads[stages_ - 1 - j] = std::move(gs);
      g = std::move(gx);
    }
  }
  if (variant_ == Variant::kShPix2pix) {
    const Tensor gj = fc_->backward(fc_act_->backward(nn::flatten(g)));
    const int flat = channels_.back() * bottleneck_hw_ * bottleneck_hw_;
    Tensor gf(g.n, flat, 1, 1);
    for (int n = 0; n < g.n; ++n) std::copy(gj.sample(n), gj.sample(n) + flat, gf.sample(n));
    g = nn::unflatten(gf, channels_.back(), bottleneck_hw_, bottleneck_hw_);
  }
  for (int i = stages_ - 1; i >= 0; --i) {
    if (i < stages_ - 1) {
      const Tensor& sg = skip_grads[i];
      for (size_t k = 0; k < g.size(); ++k) g.data[k] += sg.data[k];
    }
    auto& st = enc_[i];
    g = st.act->backward(g);
    if (st.norm) g = st.norm->backward(g);
    g = st.conv->backward(g);
  }
}

void Generator::params(std::vector<nn::Param*>& out) {
  for (auto& st : enc_) {
    st.conv->params(out);
    if (st.norm) st.norm->params(out);
  }
  if (fc_) fc_->params(out);
  for (auto& st : dec_) {
    st.conv->params(out);
    if (st.norm) st.norm->params(out);
  }
}

void Generator::state(std::vector<nn::StateEntry>& out) {
  for (auto& st : enc_) {
    st.conv->state(out);
    if (st.norm) st.norm->state(out);
  }
  if (fc_) fc_->state(out);
  for (auto& st : dec_) {
    st.conv->state(out);
    if (st.norm) st.norm->state(out);
  }
}

Discriminator::Discriminator(const TranslatorConfig& config, Rng& rng) {
  const int b = config.discriminator_base;
  net_.add<nn::Conv2d>("disc.conv0", 2, b, 4, 2, 1, rng);
  net_.add<nn::LeakyReLU>("disc.act0", 0.2f);
  net_.add<nn::Conv2d>("disc.conv1", b, 2 * b, 4, 2, 1, rng);
  net_.add<nn::BatchNorm2d>("disc.bn1", 2 * b);
  net_.add<nn::LeakyReLU>("disc.act1", 0.2f);
  net_.add<nn::Conv2d>("disc.conv2", 2 * b, 4 * b, 4, 2, 1, rng);
  net_.add<nn::BatchNorm2d>("disc.bn2", 4 * b);
  net_.add<nn::LeakyReLU>("disc.act2", 0.2f);
  net_.add<nn::Conv2d>("disc.score", 4 * b, 1, 3, 1, 1, rng);
}

Tensor Discriminator::forward(const Tensor& sim, const Tensor& candidate, bool train) {
  if (!sim.same_shape(candidate))
    throw ConfigError("discriminator inputs differ in shape: " + sim.shape_string() + " vs " +
                      candidate.shape_string());
  return net_.forward(nn::concat_channels(sim, candidate), train);
}

Tensor Discriminator::backward(const Tensor& grad_scores) {
  const Tensor g = net_.backward(grad_scores);
  Tensor g_sim;
  Tensor g_candidate;
  nn::split_channels(g, 1, g_sim, g_candidate);
  return g_candidate;
}

void Discriminator::params(std::vector<nn::Param*>& out) { net_.params(out); }
void Discriminator::state(std::vector<nn::StateEntry>& out) { net_.state(out); }

}  // namespace simshear::translate
