#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "simshear/estimate/gdnn.h"
#include "test_util.h"

namespace simshear::estimate {
namespace {

GaussianPrediction gp(std::initializer_list<double> mean, std::initializer_list<double> var) {
  GaussianPrediction p;
  p.mean = Eigen::Map<const Eigen::VectorXd>(std::data(mean), mean.size());
  p.variance = Eigen::Map<const Eigen::VectorXd>(std::data(var), var.size());
  return p;
}

Eigen::VectorXd vec(std::initializer_list<double> v) { return Eigen::Map<const Eigen::VectorXd>(std::data(v), v.size()); }

TEST(Nll, ClosedFormValues) {
  const double v0 = 1.0 / (2.0 * M_PI);
  EXPECT_NEAR(nll_loss(gp({1.0, -2.0, 0.5, 3.0}, {v0, v0, v0, v0}), vec({1.0, -2.0, 0.5, 3.0})), 0.0, 1e-12);
  EXPECT_NEAR(nll_loss(gp({0.0}, {1.0}), vec({1.0})), 1.41894, 1e-5);
  EXPECT_NEAR(nll_loss(gp({0.0}, {1.0}), vec({1.0})), 0.5 * std::log(2 * M_PI) + 0.5, 1e-12);
  const double a = nll_loss(gp({1, 2, 3}, {0.3, 0.7, 2.0}), vec({1, 2, 3}));
  const double b = nll_loss(gp({1, 2, 3}, {0.6, 1.4, 4.0}), vec({1, 2, 3}));
  EXPECT_NEAR(b - a, 3 * 0.5 * std::log(2.0), 1e-12);
}

TEST(Nll, BatchIsAveraged) {
  const std::vector<GaussianPrediction> preds{gp({0}, {1}), gp({0}, {1})};
  const std::vector<Eigen::VectorXd> labels{vec({1}), vec({0})};
  EXPECT_NEAR(nll_loss(preds, labels), 0.5 * std::log(2 * M_PI) + 0.25, 1e-12);
}

TEST(Nll, RejectsBadInputs) {
  EXPECT_THROW(nll_loss(gp({0}, {0.0}), vec({1})), std::domain_error);
  EXPECT_THROW(nll_loss(gp({0}, {-1.0}), vec({1})), std::domain_error);
  EXPECT_THROW(nll_loss(gp({0, 1}, {1, 1}), vec({1})), std::invalid_argument);
  EXPECT_THROW(nll_loss(std::vector<GaussianPrediction>{}, {}), std::invalid_argument);
}

TEST(Nll, GradientMatchesCentralDifferences) {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-2, 2), pos(0.2, 3);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<GaussianPrediction> preds;
    std::vector<Eigen::VectorXd> labels;
    for (int i = 0; i < 3; ++i) {
      preds.push_back(gp({u(gen), u(gen), u(gen), u(gen)}, {pos(gen), pos(gen), pos(gen), pos(gen)}));
      labels.push_back(vec({u(gen), u(gen), u(gen), u(gen)}));
    }
    const NllGrad g = nll_grad(preds, labels);
    const double h = 1e-6;
    for (size_t i = 0; i < preds.size(); ++i)
      for (int k = 0; k < 4; ++k) {
        for (bool var : {false, true}) {
          auto p = preds, m = preds;
          (var ? p[i].variance : p[i].mean)[k] += h;
          (var ? m[i].variance : m[i].mean)[k] -= h;
          const double fd = (nll_loss(p, labels) - nll_loss(m, labels)) / (2 * h);
          const double an = (var ? g.d_variance : g.d_mean)[i][k];
          EXPECT_LT(std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-8}), 1e-5)
              << (var ? "variance" : "mean") << " " << i << "," << k;
        }
      }
  }
}

TEST(Softplus, StableAtExtremes) {
  EXPECT_NEAR(softplus(0.0), std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(softplus(800.0), 800.0);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_TRUE(std::isfinite(softplus(-800.0)));
}

TEST(PValue, MatchesTabulatedCriticalValues) {
  EXPECT_NEAR(two_sided_t_pvalue(0.0, 10), 1.0, 1e-12);
  EXPECT_NEAR(two_sided_t_pvalue(2.228139, 10), 0.05, 1e-6);  // t_{0.975, 10}
  EXPECT_NEAR(two_sided_t_pvalue(-2.228139, 10), 0.05, 1e-6);
  EXPECT_NEAR(two_sided_t_pvalue(2.575829, 1e7), 0.01, 1e-5);  // normal limit
}

EstimatorConfig tiny_config(ImageSource source = ImageSource::kRealSynthetic, int label_dim = 4) {
  EstimatorConfig c = EstimatorConfig::preset("desk", source);
  c.label_dim = label_dim;
  c.trunk_width = 4;
  c.fc_width = 16;
  c.batch_size = 4;
  c.epochs = 2;
  return c;
}

TEST(Estimator, VariancePositiveAndDeterministic) {
  Estimator e(tiny_config(), 32, 1);
  e.label_mean = Eigen::VectorXd::Zero(4);
  e.label_std = Eigen::VectorXd::Ones(4);
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<float> u(0, 1);
  for (int trial = 0; trial < 5; ++trial) {
    ImageArray img(32, 32);
    for (Eigen::Index i = 0; i < img.size(); ++i) img.data()[i] = trial == 0 ? 1.0f : u(gen);
    const GaussianPrediction a = e.predict(img), b = e.predict(img);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.variance, b.variance);
    EXPECT_EQ(a.mean.size(), 4);
    for (int k = 0; k < 4; ++k) {
      EXPECT_GT(a.variance[k], 0.0);
      EXPECT_TRUE(std::isfinite(a.mean[k]));
    }
  }
  EXPECT_THROW(e.predict(ImageArray::Zero(64, 64)), EstimatorError);
  EXPECT_THROW(Estimator(tiny_config(), 40, 1), std::invalid_argument);
}

TEST(Estimator, DecodeUnstandardizes) {
  Estimator e(tiny_config(), 32, 1);
  e.label_mean = vec({1.0, 10.0, 0.0, -1.0});
  e.label_std = vec({0.5, 20.0, 2.0, 1.0});
  nn::Tensor raw(1, 8, 1, 1);
  const float vals[8] = {0.0f, 1.0f, -1.0f, 2.0f, -50.0f, 0.0f, 3.0f, 1.0f};
  std::copy(vals, vals + 8, raw.data.begin());
  const GaussianPrediction p = e.decode(raw).front();
  EXPECT_NEAR(p.mean[0], 1.0, 1e-12);
  EXPECT_NEAR(p.mean[1], 30.0, 1e-6);
  EXPECT_NEAR(p.mean[2], -2.0, 1e-12);
  EXPECT_NEAR(p.mean[3], 1.0, 1e-12);
  EXPECT_NEAR(p.variance[0], (softplus(-50.0) + 1e-6) * 0.25, 1e-12);
  EXPECT_GE(p.variance[0], 0.25e-6);
  EXPECT_NEAR(p.variance[1], std::log(2.0) * 400.0, 1e-3);
}

TEST(Config, ValidationAndPresets) {
  EstimatorConfig c = tiny_config();
  c.label_dim = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(EstimatorConfig::preset("huge", ImageSource::kPix2pix), std::invalid_argument);
  EXPECT_DOUBLE_EQ(EstimatorConfig::preset("paper", ImageSource::kPix2pix).learning_rate, 1e-4);
  EXPECT_EQ(image_source_from_string(to_string(ImageSource::kRealSynthetic)), ImageSource::kRealSynthetic);
  const EstimatorConfig back = estimator_config_from_json(to_json(tiny_config(ImageSource::kPix2pix, 6)));
  EXPECT_EQ(to_json(back), to_json(tiny_config(ImageSource::kPix2pix, 6)));
}

std::vector<SampleTuple> uniform_label_tuples(int n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> shear(-3, 3), depth(0.5, 2.0), angle(-45, 45);
  std::vector<SampleTuple> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].label = {depth(gen), angle(gen), {shear(gen), shear(gen), 0, 0}};
    out[i].shear = out[i].label.shear;
    out[i].contact_type = i % 2 ? ContactType::kEdge : ContactType::kSurface;
  }
  return out;
}

TEST(Report, OraclePredictionsHaveZeroError) {
  const auto tuples = uniform_label_tuples(200, 1);
  std::vector<GaussianPrediction> preds;
  for (const auto& t : tuples) preds.push_back({label_vector(t.label, 4), Eigen::VectorXd::Constant(4, 0.01)});
  const EstimatorReport r = evaluate_predictions(preds, tuples, 4, Eigen::VectorXd::Zero(4));
  ASSERT_EQ(r.variables.size(), 4u);
  const std::vector<std::string> names{"pose_depth", "pose_angle", "shear_x", "shear_y"};
  for (size_t k = 0; k < 4; ++k) {
    EXPECT_EQ(r.variables[k].name, names[k]);
    EXPECT_EQ(r.variables[k].mae, 0.0);
    EXPECT_LT(r.variables[k].p_value, 1e-6);
  }
  EXPECT_EQ(r.variables[2].mae_by_contact.size(), 2u);
}

TEST(Report, PredictMeanBaselineOnUniformShearIsHalfRange) {
  const auto tuples = uniform_label_tuples(4000, 2);
  std::vector<GaussianPrediction> preds;
  const Eigen::VectorXd mean = vec({1.25, 0.0, 0.0, 0.0});
  for (size_t i = 0; i < tuples.size(); ++i) preds.push_back({mean, Eigen::VectorXd::Ones(4)});
  const EstimatorReport r = evaluate_predictions(preds, tuples, 4, mean);
  // E|U(-3, 3)| = 1.5; the sample mean has std 0.87 / sqrt(4000) = 0.014.
  EXPECT_NEAR(r.variable("shear_x").mae, 1.5, 0.06);
  EXPECT_NEAR(r.variable("shear_y").mae, 1.5, 0.06);
  EXPECT_DOUBLE_EQ(r.variable("shear_x").mae, r.variable("shear_x").baseline_mae);
  EXPECT_NEAR(r.variable("shear_x").p_value, 1.0, 1e-9);
  EXPECT_THROW(r.variable("nope"), std::out_of_range);
}

TEST(Report, StandardizedResidualVariance) {
  const auto tuples = uniform_label_tuples(100, 3);
  std::vector<GaussianPrediction> preds;
  for (const auto& t : tuples) {
    Eigen::VectorXd m = label_vector(t.label, 4);
    m[2] += 1.0;  // constant residual 1 with sigma 2: z = 0.5, variance 0
    preds.push_back({m, Eigen::VectorXd::Constant(4, 4.0)});
  }
  const EstimatorReport r = evaluate_predictions(preds, tuples, 4, Eigen::VectorXd::Zero(4));
  EXPECT_NEAR(r.variable("shear_x").z_variance, 0.0, 1e-12);
  EXPECT_NEAR(r.variable("shear_x").mae, 1.0, 1e-12);
  EXPECT_NEAR(r.variable("shear_x").nll, 0.5 * std::log(2 * M_PI * 4.0) + 1.0 / 8.0, 1e-12);
}

class TinyEstimatorData : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new test::TempDir("estimate");
    CollectionConfig c = CollectionConfig::preset_config("desk");
    c.train_count = 16;
    c.val_count = 6;
    c.label_dim = 6;
    c.geom.image_size = 32;
    c.marker_rings = 6;
    c.marker_spacing = 2.4;
    manifest_ = new DatasetManifest(collect_dataset(c, dir_->path() / "data"));
  }
  static void TearDownTestSuite() {
    delete manifest_;
    delete dir_;
  }
  static test::TempDir* dir_;
  static DatasetManifest* manifest_;
};
test::TempDir* TinyEstimatorData::dir_ = nullptr;
DatasetManifest* TinyEstimatorData::manifest_ = nullptr;

TEST_F(TinyEstimatorData, TrainSaveLoadRoundTrip) {
  Estimator e = train_estimator(*manifest_, nullptr, tiny_config(ImageSource::kRealSynthetic, 6));
  EXPECT_EQ(e.curve.size(), 2u);
  EXPECT_GE(e.best_epoch, 1);
  EXPECT_EQ(e.label_mean.size(), 6);
  const auto path = dir_->path() / "e.ckpt";
  e.save(path);
  Estimator back = Estimator::load(path);
  EXPECT_EQ(to_json(back.config()), to_json(e.config()));
  EXPECT_EQ(back.curve.size(), e.curve.size());
  const auto val = load_dataset(*manifest_, "val");
  for (const auto& t : val) {
    const GaussianPrediction a = e.predict(t.real_image.values), b = back.predict(t.real_image.values);
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.variance, b.variance);
  }
  const EstimatorReport r = eval_estimator(back, val);
  EXPECT_EQ(r.variables.size(), 6u);
  EXPECT_EQ(r.count, static_cast<int>(val.size()));
}

TEST_F(TinyEstimatorData, TrainingIsDeterministic) {
  Estimator a = train_estimator(*manifest_, nullptr, tiny_config());
  Estimator b = train_estimator(*manifest_, nullptr, tiny_config());
  EXPECT_EQ(a.curve.back().val_nll, b.curve.back().val_nll);
}

TEST_F(TinyEstimatorData, GeneratedSourceNeedsMatchingTranslator) {
  EXPECT_THROW(train_estimator(*manifest_, nullptr, tiny_config(ImageSource::kShPix2pix)), EstimatorError);
  translate::TranslatorConfig tc = translate::TranslatorConfig::preset("desk", translate::Variant::kPix2pix);
  tc.image_size = 32;
  tc.encoder_channels = {4, 8};
  tc.discriminator_base = 4;
  tc.resolve();
  translate::Translator t(tc, translate::shear_scale_from_ranges(manifest_->config.ranges), 1);
  EXPECT_THROW(train_estimator(*manifest_, &t, tiny_config(ImageSource::kShPix2pix)), EstimatorError);
  EXPECT_NO_THROW(train_estimator(*manifest_, &t, tiny_config(ImageSource::kPix2pix)));
}

TEST_F(TinyEstimatorData, NonFiniteGuard) {
  EstimatorConfig c = tiny_config();
  c.learning_rate = 1e35;
  EXPECT_THROW(train_estimator(*manifest_, nullptr, c), EstimatorError);
}

}  // namespace
}  // namespace simshear::estimate
