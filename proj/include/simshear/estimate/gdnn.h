#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "simshear/dataset.h"
#include "simshear/nn/layers.h"
#include "simshear/translate/translator.h"

namespace simshear::estimate {

using nn::Tensor;

enum class ImageSource { kShPix2pix, kPix2pix, kRealSynthetic };

std::string to_string(ImageSource s);
ImageSource image_source_from_string(const std::string& name);

class EstimatorError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EstimatorConfig {
  int label_dim = 4;
  int trunk_width = 16;  // channels of the first conv; doubles twice
  int fc_width = 128;
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-4;
  int patience = 10;
  std::uint64_t seed = 1;
  ImageSource source = ImageSource::kShPix2pix;

  static EstimatorConfig preset(const std::string& name, ImageSource source);
  void validate() const;
};

Json to_json(const EstimatorConfig& c);
EstimatorConfig estimator_config_from_json(const Json& j);

/// Per-variable Gaussian in label units (mm, deg).
struct GaussianPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Sum over components of 0.5 ln(2 pi var) + (y - mean)^2 / (2 var),
/// averaged over the batch.
double nll_loss(const std::vector<GaussianPrediction>& preds, const std::vector<Eigen::VectorXd>& labels);
double nll_loss(const GaussianPrediction& pred, const Eigen::VectorXd& label);

struct NllGrad {
  std::vector<Eigen::VectorXd> d_mean;
  std::vector<Eigen::VectorXd> d_variance;
};
NllGrad nll_grad(const std::vector<GaussianPrediction>& preds, const std::vector<Eigen::VectorXd>& labels);

/// log(1 + e^x) without overflow.
double softplus(double x);

struct EstimatorEpoch {
  int epoch = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
};

/// Conv trunk with batch norm, then mean and softplus-variance heads.
/// Labels are standardized with stored train statistics.
class Estimator {
 public:
  Estimator(EstimatorConfig config, int image_size, std::uint64_t init_seed);

  static Estimator load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  const EstimatorConfig& config() const { return config_; }
  int image_size() const { return image_size_; }

  /// Raw network output (n, 2 * label_dim) for standardized targets.
  Tensor forward(const Tensor& images, bool train);
  void backward(const Tensor& grad_out);
  void params(std::vector<nn::Param*>& out) { net_.params(out); }

  GaussianPrediction predict(const ImageArray& image);
  std::vector<GaussianPrediction> predict(const std::vector<const ImageArray*>& images);

  /// Converts raw standardized outputs to label units.
  std::vector<GaussianPrediction> decode(const Tensor& raw) const;

  Eigen::VectorXd label_mean;
  Eigen::VectorXd label_std;
  std::vector<EstimatorEpoch> curve;
  int best_epoch = 0;
  std::string translator_path;

  /// Everything a checkpoint stores, running stats included.
  std::vector<nn::StateEntry> state() const;

 private:

  EstimatorConfig config_;
  int image_size_;
  mutable nn::Sequential net_;
};

/// Training images for a source: translator outputs for generated
/// sources, the stored real images otherwise.
std::vector<ImageArray> source_images(const std::vector<SampleTuple>& tuples, ImageSource source,
                                      translate::Translator* translator);

/// Adam on the NLL; early stopping on val NLL computed on images of the
/// same source. `translator` is required for generated sources.
Estimator train_estimator(const DatasetManifest& manifest, translate::Translator* translator,
                          EstimatorConfig config, std::ostream* log = nullptr);

void write_curve_csv(const std::filesystem::path& path, const std::vector<EstimatorEpoch>& curve);

struct VariableReport {
  std::string name;
  double mae = 0.0;
  double nll = 0.0;
  double baseline_mae = 0.0;  // always predicting the train mean
  double z_variance = 0.0;    // variance of (y - mean) / sigma
  double paired_t = 0.0;      // paired t statistic of |err| vs |baseline err|
  double p_value = 1.0;       // two-sided
  std::map<std::string, double> mae_by_contact;
};

struct EstimatorReport {
  std::string source;
  int count = 0;
  double nll = 0.0;
  std::vector<VariableReport> variables;

  const VariableReport& variable(const std::string& name) const;
};

Json to_json(const EstimatorReport& r);

/// Evaluates on the real_synthetic images of `tuples`.
EstimatorReport eval_estimator(Estimator& estimator, const std::vector<SampleTuple>& tuples);

/// Report for arbitrary per-sample predictions (e.g. an oracle).
EstimatorReport evaluate_predictions(const std::vector<GaussianPrediction>& preds,
                                     const std::vector<SampleTuple>& tuples, int label_dim,
                                     const Eigen::VectorXd& baseline_mean);

/// Two-sided p-value of a Student t statistic.
double two_sided_t_pvalue(double t, double dof);

}  // namespace simshear::estimate
