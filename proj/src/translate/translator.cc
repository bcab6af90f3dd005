#include "simshear/translate/translator.h"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "simshear/nn/adam.h"
#include "simshear/nn/checkpoint.h"
#include "simshear/rng.h"

namespace simshear::translate {
namespace {

constexpr int kInferenceBatch = 50;

Eigen::ArrayXd to_double(const nn::Tensor& t) {
  return Eigen::Map<const Eigen::ArrayXf>(t.data.data(), static_cast<Eigen::Index>(t.size()))
      .cast<double>();
}

nn::Tensor from_double(const Eigen::ArrayXd& a, const nn::Tensor& like) {
  nn::Tensor t(like.n, like.c, like.h, like.w);
  for (Eigen::Index i = 0; i < a.size(); ++i) t.data[i] = static_cast<float>(a[i]);
  return t;
}

std::vector<int> permutation(int n, Rng& rng) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return p;
}

using Snapshot = std::vector<nn::FloatVec>;

Snapshot take_snapshot(const std::vector<nn::StateEntry>& state) {
  Snapshot s;
  for (const auto& e : state) s.push_back(*e.data);
  return s;
}

void restore_snapshot(const std::vector<nn::StateEntry>& state, const Snapshot& s) {
  for (size_t i = 0; i < state.size(); ++i) *state[i].data = s[i];
}

Json curve_to_json(const std::vector<EpochRecord>& curve) {
  Json a = Json::array();
  for (const auto& r : curve)
    a.push_back(Json{{"epoch", r.epoch},
                     {"generator_loss", r.generator_loss},
                     {"discriminator_loss", r.discriminator_loss},
                     {"reconstruction", r.reconstruction},
                     {"val_mape", r.val_mape}});
  return a;
}

}  // namespace

ShearScale shear_scale_from_ranges(const ContactRanges& r) {
  auto span = [](const Interval& i) {
    const double s = std::max(std::abs(i.lo), std::abs(i.hi));
    return s > 0.0 ? s : 1.0;
  };
  return {span(r.shear_xy), span(r.shear_xy), span(r.shear_z), span(r.shear_yaw)};
}

nn::Tensor stack_images(const std::vector<const ImageArray*>& images) {
  if (images.empty()) return nn::Tensor();
  const int h = static_cast<int>(images[0]->rows());
  const int w = static_cast<int>(images[0]->cols());
  nn::Tensor t(static_cast<int>(images.size()), 1, h, w);
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i]->rows() != h || images[i]->cols() != w)
      throw ConfigError("images in a batch differ in size");
    std::copy(images[i]->data(), images[i]->data() + h * w, t.sample(static_cast<int>(i)));
  }
  return t;
}

ImageArray unstack_image(const nn::Tensor& t, int index) {
  ImageArray img(t.h, t.w);
  std::copy(t.sample(index), t.sample(index) + t.plane(), img.data());
  return img;
}

Translator::Translator(TranslatorConfig config, ShearScale shear_scale, std::uint64_t init_seed)
    : config_(std::move(config)), shear_scale_(shear_scale) {
  config_.resolve();
  Rng rng(init_seed);
  gen_ = std::make_unique<Generator>(config_, rng);
  disc_ = std::make_unique<Discriminator>(config_, rng);
}

std::vector<nn::StateEntry> Translator::state() const {
  std::vector<nn::StateEntry> s;
  gen_->state(s);
  disc_->state(s);
  return s;
}

void Translator::save(const std::filesystem::path& path) const {
  Json meta{{"kind", "translator"},
            {"config", to_json(config_)},
            {"shear_scale", shear_scale_},
            {"best_epoch", best_epoch},
            {"best_val_mape", best_val_mape},
            {"curve", curve_to_json(curve)}};
  nn::save_checkpoint(path, meta, state());
}

Translator Translator::load(const std::filesystem::path& path) {
  const Json meta = nn::read_checkpoint_meta(path);
  if (meta.value("kind", std::string()) != "translator")
    throw nn::CheckpointError(path.string() + " is not a translator checkpoint");
  Translator t(translator_config_from_json(meta.at("config")),
               meta.at("shear_scale").get<ShearScale>(), 0);
  nn::load_checkpoint(path, t.state());
  t.best_epoch = meta.value("best_epoch", 0);
  t.best_val_mape = meta.value("best_val_mape", 0.0);
  for (const auto& r : meta.at("curve"))
    t.curve.push_back({r.at("epoch").get<int>(), r.at("generator_loss").get<double>(),
                       r.at("discriminator_loss").get<double>(),
                       r.at("reconstruction").get<double>(), r.at("val_mape").get<double>()});
  return t;
}

nn::Tensor Translator::shear_tensor(const std::vector<ShearVector>& shears) const {
  nn::Tensor t(static_cast<int>(shears.size()), 4, 1, 1);
  for (size_t i = 0; i < shears.size(); ++i) {
    const Eigen::Vector4d v = shears[i].as_vector();
    for (int k = 0; k < 4; ++k)
      t.sample(static_cast<int>(i))[k] = static_cast<float>(v[k] / shear_scale_[k]);
  }
  return t;
}

std::vector<ImageArray> Translator::generate(const std::vector<const ImageArray*>& sims,
                                             const std::vector<ShearVector>& shears) {
  const bool conditioned = variant() == Variant::kShPix2pix;
  if (conditioned && shears.size() != sims.size())
    throw ConfigError("shpix2pix needs one shear vector per image");
  if (!conditioned && !shears.empty()) throw ConfigError("pix2pix does not accept shear vectors");
  std::vector<ImageArray> out;
  out.reserve(sims.size());
  for (size_t start = 0; start < sims.size(); start += kInferenceBatch) {
    const size_t end = std::min(sims.size(), start + kInferenceBatch);
    const std::vector<const ImageArray*> batch(sims.begin() + start, sims.begin() + end);
    const nn::Tensor x = stack_images(batch);
    nn::Tensor y;
    if (conditioned) {
      const nn::Tensor s =
          shear_tensor(std::vector<ShearVector>(shears.begin() + start, shears.begin() + end));
      y = gen_->forward(x, &s, false);
    } else {
      y = gen_->forward(x, nullptr, false);
    }
    for (int i = 0; i < y.n; ++i) out.push_back(unstack_image(y, i));
  }
  return out;
}

TactileImage Translator::generate(const TactileImage& sim, const ShearVector* shear) {
  std::vector<ShearVector> shears;
  if (shear) shears.push_back(*shear);
  TactileImage out;
  out.domain = ImageDomain::kGenerated;
  out.values = generate({&sim.values}, shears).front();
  return out;
}

nn::Tensor Translator::score(const std::vector<const ImageArray*>& sims,
                             const std::vector<const ImageArray*>& candidates) {
  if (sims.size() != candidates.size()) throw ConfigError("score needs paired batches");
  return disc_->forward(stack_images(sims), stack_images(candidates), false);
}

Translator train_translator(const DatasetManifest& manifest, TranslatorConfig config,
                            std::ostream* log) {
  using Clock = std::chrono::steady_clock;
  config.image_size = manifest.config.geom.image_size;
  config.resolve();
  const auto train = load_dataset(manifest, "train");
  const auto val = load_dataset(manifest, "val");
  if (train.size() < static_cast<size_t>(config.batch_size))
    throw ConfigError("training split smaller than one batch");
  if (val.empty()) throw ConfigError("validation split is empty");

  Translator model(config, shear_scale_from_ranges(manifest.config.ranges),
                   substream_seed(config.seed, 0));
  const bool conditioned = config.variant == Variant::kShPix2pix;

  std::vector<const ImageArray*> sims, reals, val_sims;
  std::vector<ShearVector> shears, val_shears;
  for (const auto& t : train) {
    sims.push_back(&t.sim_image.values);
    reals.push_back(&t.real_image.values);
    shears.push_back(t.shear);
  }
  for (const auto& t : val) {
    val_sims.push_back(&t.sim_image.values);
    val_shears.push_back(t.shear);
  }
  const nn::Tensor all_sim = stack_images(sims);
  const nn::Tensor all_real = stack_images(reals);
  const nn::Tensor all_shear = model.shear_tensor(shears);
  if (!conditioned) val_shears.clear();

  std::vector<nn::Param*> gp, dp;
  model.generator().params(gp);
  model.discriminator().params(dp);
  const nn::AdamOptions opts{config.learning_rate, config.adam_beta1, 0.999, 1e-8};
  nn::Adam g_opt(gp, opts);
  nn::Adam d_opt(dp, opts);
  Rng rng(substream_seed(config.seed, 1));

  std::vector<nn::StateEntry> state;
  model.generator().state(state);
  model.discriminator().state(state);
  Snapshot best;
  double best_mape = std::numeric_limits<double>::infinity();
  int since_best = 0;

  const int n = static_cast<int>(train.size());
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<int> order = permutation(n, rng);
    double g_sum = 0.0, d_sum = 0.0, rec_sum = 0.0;
    int batches = 0;
    for (int start = 0; start + 1 < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      if (end - start < 2) break;  // batch norm needs two samples
      const std::vector<int> idx(order.begin() + start, order.begin() + end);
      const nn::Tensor s = nn::gather(all_sim, idx);
      const nn::Tensor r = nn::gather(all_real, idx);
      const nn::Tensor sh = nn::gather(all_shear, idx);
      const nn::Tensor fake = model.generator().forward(s, conditioned ? &sh : nullptr, true);

      // Each discriminator pass is backpropagated before the next forward
      // overwrites the layer caches; gradients accumulate across both.
      d_opt.zero_grad();
      const nn::Tensor real_scores = model.discriminator().forward(s, r, true);
      const Eigen::ArrayXd rs = to_double(real_scores);
      model.discriminator().backward(
          from_double((rs - 1.0) / static_cast<double>(rs.size()), real_scores));
      const nn::Tensor fake_scores_d = model.discriminator().forward(s, fake, true);
      const Eigen::ArrayXd fsd = to_double(fake_scores_d);
      model.discriminator().backward(
          from_double(discriminator_loss_grad(rs, fsd).d_fake_scores, fake_scores_d));
      const double d_loss = 0.5 * (rs - 1.0).square().mean() + 0.5 * fsd.square().mean();
      if (!std::isfinite(d_loss) || nn::has_non_finite_grad(dp))
        throw TrainingDiverged("discriminator loss diverged at epoch " + std::to_string(epoch));
      d_opt.step();

      g_opt.zero_grad();
      const nn::Tensor fake_scores = model.discriminator().forward(s, fake, true);
      const Eigen::ArrayXd fg = to_double(fake), rg = to_double(r), fs = to_double(fake_scores);
      const TranslatorLosses losses = translator_loss(fg, rg, fs, rs, config.reconstruction_weight,
                                                      config.adversarial_weight);
      if (!std::isfinite(losses.generator))
        throw TrainingDiverged("generator loss is non-finite at epoch " + std::to_string(epoch));
      const GeneratorLossGrad grad = generator_loss_grad(fg, rg, fs, config.reconstruction_weight,
                                                         config.adversarial_weight);
      nn::Tensor d_fake = model.discriminator().backward(from_double(grad.d_fake_scores, fake_scores));
      for (size_t k = 0; k < d_fake.size(); ++k)
        d_fake.data[k] += static_cast<float>(grad.d_generated[static_cast<Eigen::Index>(k)]);
      model.generator().backward(d_fake);
      if (nn::has_non_finite_grad(gp))
        throw TrainingDiverged("generator gradient is non-finite at epoch " + std::to_string(epoch));
      g_opt.step();

      g_sum += losses.generator;
      d_sum += d_loss;
      rec_sum += losses.reconstruction;
      ++batches;
    }

    const std::vector<ImageArray> out = model.generate(val_sims, val_shears);
    double val_mape = 0.0;
    for (size_t i = 0; i < out.size(); ++i) val_mape += mape(out[i], val[i].real_image.values);
    val_mape /= static_cast<double>(out.size());

    model.curve.push_back({epoch, g_sum / batches, d_sum / batches, rec_sum / batches, val_mape});
    if (val_mape < best_mape) {
      best_mape = val_mape;
      model.best_epoch = epoch;
      best = take_snapshot(state);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) {
      const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
      *log << to_string(config.variant) << " epoch " << epoch << " g " << g_sum / batches << " d "
           << d_sum / batches << " val_mape " << val_mape << " (" << secs << " s)" << std::endl;
    }
    if (since_best >= config.patience) break;
  }
  restore_snapshot(state, best);
  model.best_val_mape = best_mape;
  return model;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "epoch,generator_loss,discriminator_loss,reconstruction,val_mape\n";
  out.precision(10);
  for (const auto& r : curve)
    out << r.epoch << ',' << r.generator_loss << ',' << r.discriminator_loss << ','
        << r.reconstruction << ',' << r.val_mape << '\n';
}

Json to_json(const TranslationMetrics& m) {
  Json j = Json::object();
  for (const auto& [k, row] : m)
    j[k] = Json{{"mape", row.mape}, {"ssim", row.ssim}, {"count", row.count}};
  return j;
}

TranslationMetrics eval_translation(const std::vector<SampleTuple>& tuples, const TranslateFn& fn) {
  if (tuples.empty()) throw MetricError("cannot evaluate an empty split");
  const std::vector<ImageArray> outputs = fn(tuples);
  if (outputs.size() != tuples.size()) throw MetricError("translator returned wrong batch size");
  TranslationMetrics m{{"edge", {}}, {"surface", {}}, {"overall", {}}};
  for (size_t i = 0; i < tuples.size(); ++i) {
    const double e = mape(outputs[i], tuples[i].real_image.values);
    const double s = ssim(outputs[i], tuples[i].real_image.values);
    for (const std::string& key : {to_string(tuples[i].contact_type), std::string("overall")}) {
      m[key].mape += e;
      m[key].ssim += s;
      m[key].count += 1;
    }
  }
  for (auto& [k, row] : m)
    if (row.count > 0) {
      row.mape /= row.count;
      row.ssim /= row.count;
    }
  return m;
}

std::vector<ImageArray> translate_tuples(Translator& translator,
                                         const std::vector<SampleTuple>& tuples) {
  std::vector<const ImageArray*> sims;
  std::vector<ShearVector> shears;
  for (const auto& t : tuples) {
    sims.push_back(&t.sim_image.values);
    if (translator.variant() == Variant::kShPix2pix) shears.push_back(t.shear);
  }
  return translator.generate(sims, shears);
}

TranslationMetrics eval_translation(Translator& translator, const std::vector<SampleTuple>& tuples) {
  return eval_translation(tuples, [&](const std::vector<SampleTuple>& ts) {
    return translate_tuples(translator, ts);
  });
}

}  // namespace simshear::translate
