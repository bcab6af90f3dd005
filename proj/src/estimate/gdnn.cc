#include "simshear/estimate/gdnn.h"

#include <boost/math/distributions/students_t.hpp>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>

#include "simshear/nn/adam.h"
#include "simshear/nn/checkpoint.h"
#include "simshear/rng.h"

namespace simshear::estimate {
namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr int kInferenceBatch = 100;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<int> permutation(int n, Rng& rng) {
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  for (int i = n - 1; i > 0; --i) std::swap(p[i], p[rng.below(static_cast<std::uint64_t>(i) + 1)]);
  return p;
}

// Standardized-space NLL of raw outputs, and its gradient when `grad` is set.
double raw_nll(const Tensor& raw, const Eigen::MatrixXd& targets, const std::vector<int>& rows,
               int dim, Tensor* grad) {
  const int n = raw.n;
  double total = 0.0;
  if (grad) *grad = Tensor(raw.n, raw.c, 1, 1);
  for (int i = 0; i < n; ++i) {
    const float* o = raw.sample(i);
    for (int k = 0; k < dim; ++k) {
      const double m = o[k];
      const double v = softplus(o[dim + k]) + kVarianceFloor;
      const double e = targets(rows[i], k) - m;
      total += 0.5 * std::log(2.0 * M_PI * v) + e * e / (2.0 * v);
      if (grad) {
        float* g = grad->sample(i);
        g[k] = static_cast<float>(-e / v / n);
        const double dv = 0.5 / v - e * e / (2.0 * v * v);
        g[dim + k] = static_cast<float>(dv * sigmoid(o[dim + k]) / n);
      }
    }
  }
  return total / n;
}

using Snapshot = std::vector<nn::FloatVec>;

}  // namespace

std::string to_string(ImageSource s) {
  switch (s) {
    case ImageSource::kShPix2pix:
      return "shpix2pix";
    case ImageSource::kPix2pix:
      return "pix2pix";
    case ImageSource::kRealSynthetic:
      return "real_synthetic";
  }
  return "unknown";
}

ImageSource image_source_from_string(const std::string& name) {
  if (name == "shpix2pix") return ImageSource::kShPix2pix;
  if (name == "pix2pix") return ImageSource::kPix2pix;
  if (name == "real_synthetic") return ImageSource::kRealSynthetic;
  throw std::invalid_argument("unknown image source '" + name +
                              "' (shpix2pix, pix2pix or real_synthetic)");
}

EstimatorConfig EstimatorConfig::preset(const std::string& name, ImageSource source) {
  EstimatorConfig c;
  c.source = source;
  if (name == "desk" || name == "desk128") {
    c.learning_rate = 5e-4;
  } else if (name != "paper") {
    throw std::invalid_argument("unknown estimator preset '" + name + "' (desk, desk128 or paper)");
  }
  return c;
}

void EstimatorConfig::validate() const {
  if (label_dim != 4 && label_dim != 6) throw std::invalid_argument("label_dim must be 4 or 6");
  if (trunk_width <= 0 || fc_width <= 0) throw std::invalid_argument("layer widths must be positive");
  if (epochs <= 0 || batch_size < 2 || !(learning_rate > 0.0) || patience <= 0)
    throw std::invalid_argument("epochs, patience > 0, batch_size >= 2 and learning_rate > 0 required");
}

Json to_json(const EstimatorConfig& c) {
  return Json{{"label_dim", c.label_dim}, {"trunk_width", c.trunk_width},
              {"fc_width", c.fc_width},   {"epochs", c.epochs},
              {"batch_size", c.batch_size}, {"learning_rate", c.learning_rate},
              {"patience", c.patience},   {"seed", c.seed},
              {"source", to_string(c.source)}};
}

EstimatorConfig estimator_config_from_json(const Json& j) {
  const ImageSource source = image_source_from_string(j.value("source", std::string("shpix2pix")));
  EstimatorConfig c = EstimatorConfig::preset(j.value("preset", std::string("desk")), source);
  c.label_dim = j.value("label_dim", c.label_dim);
  c.trunk_width = j.value("trunk_width", c.trunk_width);
  c.fc_width = j.value("fc_width", c.fc_width);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.patience = j.value("patience", c.patience);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double nll_loss(const GaussianPrediction& pred, const Eigen::VectorXd& label) {
  return nll_loss(std::vector<GaussianPrediction>{pred}, std::vector<Eigen::VectorXd>{label});
}

double nll_loss(const std::vector<GaussianPrediction>& preds,
                const std::vector<Eigen::VectorXd>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw std::invalid_argument("nll_loss needs equal, non-empty batches");
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const auto& p = preds[i];
    if (p.mean.size() != labels[i].size() || p.variance.size() != labels[i].size())
      throw std::invalid_argument("prediction and label dimensions differ");
    for (Eigen::Index k = 0; k < p.mean.size(); ++k) {
      const double v = p.variance[k];
      if (!(v > 0.0)) throw std::domain_error("variance must be positive");
      const double e = labels[i][k] - p.mean[k];
      total += 0.5 * std::log(2.0 * M_PI * v) + e * e / (2.0 * v);
    }
  }
  return total / static_cast<double>(preds.size());
}

NllGrad nll_grad(const std::vector<GaussianPrediction>& preds,
                 const std::vector<Eigen::VectorXd>& labels) {
  if (preds.size() != labels.size() || preds.empty())
    throw std::invalid_argument("nll_grad needs equal, non-empty batches");
  const double n = static_cast<double>(preds.size());
  NllGrad g;
  for (size_t i = 0; i < preds.size(); ++i) {
    const Eigen::ArrayXd v = preds[i].variance.array();
    const Eigen::ArrayXd e = labels[i].array() - preds[i].mean.array();
    g.d_mean.push_back((-e / v / n).matrix());
    g.d_variance.push_back(((0.5 / v - e.square() / (2.0 * v.square())) / n).matrix());
  }
  return g;
}

Estimator::Estimator(EstimatorConfig config, int image_size, std::uint64_t init_seed)
    : config_(std::move(config)), image_size_(image_size) {
  config_.validate();
  if (image_size < 16 || image_size % 16 != 0)
    throw std::invalid_argument("estimator needs an image size divisible by 16");
  Rng rng(init_seed);
  const int w = config_.trunk_width;
  const int widths[4] = {w, 2 * w, 4 * w, 4 * w};
  int cin = 1;
  for (int i = 0; i < 4; ++i) {
    const std::string p = "gdnn.conv" + std::to_string(i);
    net_.add<nn::Conv2d>(p, cin, widths[i], 4, 2, 1, rng);
    net_.add<nn::BatchNorm2d>(p + ".bn", widths[i]);
    net_.add<nn::LeakyReLU>(p + ".act", 0.2f);
    cin = widths[i];
  }
  const int side = image_size / 16;
  net_.add<nn::Linear>("gdnn.fc", cin * side * side, config_.fc_width, rng);
  net_.add<nn::LeakyReLU>("gdnn.fc.act", 0.0f);
  net_.add<nn::Linear>("gdnn.head", config_.fc_width, 2 * config_.label_dim, rng);
  label_mean = Eigen::VectorXd::Zero(config_.label_dim);
  label_std = Eigen::VectorXd::Ones(config_.label_dim);
}

std::vector<nn::StateEntry> Estimator::state() const {
  std::vector<nn::StateEntry> s;
  net_.state(s);
  return s;
}

Tensor Estimator::forward(const Tensor& images, bool train) {
  if (images.h != image_size_ || images.w != image_size_ || images.c != 1)
    throw EstimatorError("estimator expects 1x" + std::to_string(image_size_) + "x" +
                         std::to_string(image_size_) + " images, got " + images.shape_string());
  return net_.forward(images, train);
}

void Estimator::backward(const Tensor& grad_out) { net_.backward(grad_out); }

std::vector<GaussianPrediction> Estimator::decode(const Tensor& raw) const {
  const int d = config_.label_dim;
  std::vector<GaussianPrediction> out;
  for (int i = 0; i < raw.n; ++i) {
    const float* o = raw.sample(i);
    GaussianPrediction p;
    p.mean.resize(d);
    p.variance.resize(d);
    for (int k = 0; k < d; ++k) {
      p.mean[k] = o[k] * label_std[k] + label_mean[k];
      p.variance[k] = (softplus(o[d + k]) + kVarianceFloor) * label_std[k] * label_std[k];
    }
    out.push_back(std::move(p));
  }
  return out;
}

std::vector<GaussianPrediction> Estimator::predict(const std::vector<const ImageArray*>& images) {
  std::vector<GaussianPrediction> out;
  for (size_t start = 0; start < images.size(); start += kInferenceBatch) {
    const size_t end = std::min(images.size(), start + kInferenceBatch);
    const Tensor x = translate::stack_images(
        std::vector<const ImageArray*>(images.begin() + start, images.begin() + end));
    const auto batch = decode(forward(x, false));
    out.insert(out.end(), batch.begin(), batch.end());
  }
  return out;
}

GaussianPrediction Estimator::predict(const ImageArray& image) { return predict({&image}).front(); }

void Estimator::save(const std::filesystem::path& path) const {
  Json curve_json = Json::array();
  for (const auto& e : curve)
    curve_json.push_back(Json{{"epoch", e.epoch}, {"train_nll", e.train_nll}, {"val_nll", e.val_nll}});
  const Json meta{{"kind", "estimator"},
                  {"config", to_json(config_)},
                  {"image_size", image_size_},
                  {"label_names", label_names(config_.label_dim)},
                  {"label_mean", std::vector<double>(label_mean.data(), label_mean.data() + label_mean.size())},
                  {"label_std", std::vector<double>(label_std.data(), label_std.data() + label_std.size())},
                  {"best_epoch", best_epoch},
                  {"translator", translator_path},
                  {"curve", curve_json}};
  nn::save_checkpoint(path, meta, state());
}

Estimator Estimator::load(const std::filesystem::path& path) {
  const Json meta = nn::read_checkpoint_meta(path);
  if (meta.value("kind", std::string()) != "estimator")
    throw nn::CheckpointError(path.string() + " is not an estimator checkpoint");
  Estimator e(estimator_config_from_json(meta.at("config")), meta.at("image_size").get<int>(), 0);
  nn::load_checkpoint(path, e.state());
  const auto mean = meta.at("label_mean").get<std::vector<double>>();
  const auto sd = meta.at("label_std").get<std::vector<double>>();
  e.label_mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), static_cast<Eigen::Index>(mean.size()));
  e.label_std = Eigen::Map<const Eigen::VectorXd>(sd.data(), static_cast<Eigen::Index>(sd.size()));
  e.best_epoch = meta.value("best_epoch", 0);
  e.translator_path = meta.value("translator", std::string());
  for (const auto& c : meta.at("curve"))
    e.curve.push_back({c.at("epoch").get<int>(), c.at("train_nll").get<double>(),
                       c.at("val_nll").get<double>()});
  return e;
}

std::vector<ImageArray> source_images(const std::vector<SampleTuple>& tuples, ImageSource source,
                                      translate::Translator* translator) {
  if (source == ImageSource::kRealSynthetic) {
    std::vector<ImageArray> out;
    for (const auto& t : tuples) out.push_back(t.real_image.values);
    return out;
  }
  if (!translator) throw EstimatorError("source " + to_string(source) + " needs a translator");
  const translate::Variant want = source == ImageSource::kShPix2pix ? translate::Variant::kShPix2pix
                                                                     : translate::Variant::kPix2pix;
  if (translator->variant() != want)
    throw EstimatorError("source " + to_string(source) + " given a " +
                         translate::to_string(translator->variant()) + " translator");
  return translate::translate_tuples(*translator, tuples);
}

Estimator train_estimator(const DatasetManifest& manifest, translate::Translator* translator,
                          EstimatorConfig config, std::ostream* log) {
  using Clock = std::chrono::steady_clock;
  config.validate();
  const auto train = load_dataset(manifest, "train");
  const auto val = load_dataset(manifest, "val");
  if (train.size() < static_cast<size_t>(config.batch_size)) throw EstimatorError("training split too small");
  if (val.empty()) throw EstimatorError("validation split is empty");
  const int d = config.label_dim;

  const std::vector<ImageArray> train_x = source_images(train, config.source, translator);
  const std::vector<ImageArray> val_x = source_images(val, config.source, translator);

  Estimator model(config, manifest.config.geom.image_size, substream_seed(config.seed, 0));
  if (translator && config.source != ImageSource::kRealSynthetic)
    model.translator_path = translate::to_string(translator->variant());

  const int n = static_cast<int>(train.size());
  Eigen::MatrixXd y(n, d);
  for (int i = 0; i < n; ++i) y.row(i) = label_vector(train[i].label, d).transpose();
  model.label_mean = y.colwise().mean().transpose();
  model.label_std =
      ((y.rowwise() - model.label_mean.transpose()).array().square().colwise().sum() / n).sqrt().transpose();
  for (int k = 0; k < d; ++k)
    if (!(model.label_std[k] > 1e-12)) model.label_std[k] = 1.0;
  auto standardize = [&](const std::vector<SampleTuple>& ts) {
    Eigen::MatrixXd z(static_cast<Eigen::Index>(ts.size()), d);
    for (size_t i = 0; i < ts.size(); ++i)
      z.row(static_cast<Eigen::Index>(i)) =
          ((label_vector(ts[i].label, d) - model.label_mean).array() / model.label_std.array())
              .transpose();
    return z;
  };
  const Eigen::MatrixXd train_z = standardize(train);
  const Eigen::MatrixXd val_z = standardize(val);

  std::vector<const ImageArray*> train_ptr, val_ptr;
  for (const auto& im : train_x) train_ptr.push_back(&im);
  for (const auto& im : val_x) val_ptr.push_back(&im);
  const Tensor all_x = translate::stack_images(train_ptr);
  const Tensor all_val = translate::stack_images(val_ptr);

  std::vector<nn::Param*> params;
  model.params(params);
  nn::Adam opt(params, {config.learning_rate, 0.9, 0.999, 1e-8});
  Rng rng(substream_seed(config.seed, 1));
  // Best weights including running stats.
  Snapshot best;

  double best_nll = std::numeric_limits<double>::infinity();
  int since_best = 0;
  std::vector<int> val_rows(val.size());
  for (size_t i = 0; i < val.size(); ++i) val_rows[i] = static_cast<int>(i);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = Clock::now();
    const std::vector<int> order = permutation(n, rng);
    double loss_sum = 0.0;
    int batches = 0;
    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      if (end - start < 2) break;
      const std::vector<int> idx(order.begin() + start, order.begin() + end);
      const Tensor raw = model.forward(nn::gather(all_x, idx), true);
      Tensor grad;
      const double loss = raw_nll(raw, train_z, idx, d, &grad);
      if (!std::isfinite(loss))
        throw EstimatorError("non-finite loss at epoch " + std::to_string(epoch));
      opt.zero_grad();
      model.backward(grad);
      if (nn::has_non_finite_grad(params))
        throw EstimatorError("non-finite gradient at epoch " + std::to_string(epoch));
      opt.step();
      loss_sum += loss;
      ++batches;
    }
    double val_nll = 0.0;
    for (size_t start = 0; start < val.size(); start += kInferenceBatch) {
      const size_t end = std::min(val.size(), start + kInferenceBatch);
      const std::vector<int> idx(val_rows.begin() + start, val_rows.begin() + end);
      const Tensor raw = model.forward(nn::gather(all_val, idx), false);
      val_nll += raw_nll(raw, val_z, idx, d, nullptr) * static_cast<double>(idx.size());
    }
    val_nll /= static_cast<double>(val.size());
    model.curve.push_back({epoch, loss_sum / batches, val_nll});
    if (val_nll < best_nll) {
      best_nll = val_nll;
      model.best_epoch = epoch;
      best.clear();
      for (const auto& e : model.state()) best.push_back(*e.data);
      since_best = 0;
    } else {
      ++since_best;
    }
    if (log) {
      const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
      *log << "gdnn[" << to_string(config.source) << "] epoch " << epoch << " train_nll "
           << loss_sum / batches << " val_nll " << val_nll << " (" << secs << " s)" << std::endl;
    }
    if (since_best >= config.patience) break;
  }
  const auto st = model.state();
  for (size_t i = 0; i < st.size(); ++i) *st[i].data = best[i];
  return model;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<EstimatorEpoch>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(10);
  out << "epoch,train_nll,val_nll\n";
  for (const auto& e : curve) out << e.epoch << ',' << e.train_nll << ',' << e.val_nll << '\n';
}

const VariableReport& EstimatorReport::variable(const std::string& name) const {
  for (const auto& v : variables)
    if (v.name == name) return v;
  throw std::out_of_range("report has no variable '" + name + "'");
}

Json to_json(const EstimatorReport& r) {
  Json vars = Json::array();
  for (const auto& v : r.variables)
    vars.push_back(Json{{"name", v.name},
                        {"mae", v.mae},
                        {"nll", v.nll},
                        {"baseline_mae", v.baseline_mae},
                        {"z_variance", v.z_variance},
                        {"paired_t", v.paired_t},
                        {"p_value", v.p_value},
                        {"mae_by_contact", v.mae_by_contact}});
  return Json{{"source", r.source}, {"count", r.count}, {"nll", r.nll}, {"variables", vars}};
}

double two_sided_t_pvalue(double t, double dof) {
  if (!std::isfinite(t)) return 0.0;
  boost::math::students_t dist(dof);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
}

EstimatorReport evaluate_predictions(const std::vector<GaussianPrediction>& preds,
                                     const std::vector<SampleTuple>& tuples, int label_dim,
                                     const Eigen::VectorXd& baseline_mean) {
  if (preds.size() != tuples.size() || tuples.empty())
    throw EstimatorError("evaluation needs one prediction per tuple");
  const auto names = label_names(label_dim);
  const size_t n = tuples.size();
  EstimatorReport r;
  r.count = static_cast<int>(n);
  std::vector<Eigen::VectorXd> labels;
  for (const auto& t : tuples) labels.push_back(label_vector(t.label, label_dim));
  r.nll = nll_loss(preds, labels);
  for (int k = 0; k < label_dim; ++k) {
    VariableReport v;
    v.name = names[k];
    std::vector<double> diff(n);
    std::vector<double> z(n);
    std::map<std::string, std::pair<double, int>> by_contact;
    for (size_t i = 0; i < n; ++i) {
      const double err = preds[i].mean[k] - labels[i][k];
      const double var = preds[i].variance[k];
      const double base = labels[i][k] - baseline_mean[k];
      v.mae += std::abs(err);
      v.baseline_mae += std::abs(base);
      v.nll += 0.5 * std::log(2.0 * M_PI * var) + err * err / (2.0 * var);
      z[i] = err / std::sqrt(var);
      diff[i] = std::abs(err) - std::abs(base);
      auto& slot = by_contact[to_string(tuples[i].contact_type)];
      slot.first += std::abs(err);
      slot.second += 1;
    }
    v.mae /= n;
    v.baseline_mae /= n;
    v.nll /= n;
    double zm = 0.0;
    for (double x : z) zm += x;
    zm /= n;
    for (double x : z) v.z_variance += (x - zm) * (x - zm);
    v.z_variance /= n;
    double dm = 0.0;
    for (double x : diff) dm += x;
    dm /= n;
    double ds = 0.0;
    for (double x : diff) ds += (x - dm) * (x - dm);
    ds = n > 1 ? std::sqrt(ds / (n - 1)) : 0.0;
    if (n > 1 && ds > 0.0) {
      v.paired_t = dm / (ds / std::sqrt(static_cast<double>(n)));
      v.p_value = two_sided_t_pvalue(v.paired_t, static_cast<double>(n - 1));
    }
    for (const auto& [key, slot] : by_contact) v.mae_by_contact[key] = slot.first / slot.second;
    r.variables.push_back(std::move(v));
  }
  return r;
}

EstimatorReport eval_estimator(Estimator& estimator, const std::vector<SampleTuple>& tuples) {
  if (tuples.empty()) throw EstimatorError("cannot evaluate an empty split");
  std::vector<const ImageArray*> images;
  for (const auto& t : tuples) images.push_back(&t.real_image.values);
  EstimatorReport r = evaluate_predictions(estimator.predict(images), tuples,
                                           estimator.config().label_dim, estimator.label_mean);
  r.source = to_string(estimator.config().source);
  return r;
}

}  // namespace simshear::estimate
