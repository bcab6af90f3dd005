#include "simshear/translate/metrics.h"

#include <cmath>
#include <string>
#include <vector>

namespace simshear::translate {
namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

using Grid = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> window_weights() {
  std::vector<double> w(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    w[i] = std::exp(-0.5 * d * d / (kSigma * kSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Weighted sums over every fully contained window.
Grid valid_filter(const Grid& f, const std::vector<double>& w) {
  const int rows = static_cast<int>(f.rows());
  const int cols = static_cast<int>(f.cols());
  const int oc = cols - kWindow + 1;
  const int orow = rows - kWindow + 1;
  Grid tmp(rows, oc);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < oc; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * f(r, c + k);
      tmp(r, c) = acc;
    }
  Grid out(orow, oc);
  for (int r = 0; r < orow; ++r)
    for (int c = 0; c < oc; ++c) {
      double acc = 0.0;
      for (int k = 0; k < kWindow; ++k) acc += w[k] * tmp(r + k, c);
      out(r, c) = acc;
    }
  return out;
}

void check_same(const ImageArray& a, const ImageArray& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw MetricError("image shapes differ: " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                      std::to_string(b.cols()));
}

}  // namespace

double mape(const ImageArray& a, const ImageArray& b) {
  check_same(a, b);
  if (a.size() == 0) throw MetricError("empty image");
  return (a.cast<double>() - b.cast<double>()).abs().mean();
}

double ssim(const ImageArray& a, const ImageArray& b) {
  check_same(a, b);
  if (a.rows() < kWindow || a.cols() < kWindow)
    throw MetricError("image smaller than the 11x11 SSIM window");
  static const std::vector<double> w = window_weights();
  const Grid x = a.cast<double>();
  const Grid y = b.cast<double>();
  const Grid mx = valid_filter(x, w);
  const Grid my = valid_filter(y, w);
  const Grid sxx = valid_filter(x * x, w) - mx * mx;
  const Grid syy = valid_filter(y * y, w) - my * my;
  const Grid sxy = valid_filter(x * y, w) - mx * my;
  const Grid num = (2.0 * mx * my + kC1) * (2.0 * sxy + kC2);
  const Grid den = (mx * mx + my * my + kC1) * (sxx + syy + kC2);
  return (num / den).mean();
}

TranslatorLosses translator_loss(const Eigen::ArrayXd& generated, const Eigen::ArrayXd& real,
                                 const Eigen::ArrayXd& fake_scores,
                                 const Eigen::ArrayXd& real_scores, double w_rec, double w_adv) {
  if (generated.size() != real.size() || generated.size() == 0)
    throw MetricError("generated and real batches differ in size");
  TranslatorLosses l;
  l.reconstruction = (generated - real).abs().mean();
  l.adversarial = fake_scores.size() ? (fake_scores - 1.0).square().mean() : 0.0;
  l.generator = w_rec * l.reconstruction + w_adv * l.adversarial;
  const double real_term = real_scores.size() ? (real_scores - 1.0).square().mean() : 0.0;
  const double fake_term = fake_scores.size() ? fake_scores.square().mean() : 0.0;
  l.discriminator = 0.5 * real_term + 0.5 * fake_term;
  return l;
}

GeneratorLossGrad generator_loss_grad(const Eigen::ArrayXd& generated, const Eigen::ArrayXd& real,
                                      const Eigen::ArrayXd& fake_scores, double w_rec,
                                      double w_adv) {
  if (generated.size() != real.size() || generated.size() == 0)
    throw MetricError("generated and real batches differ in size");
  GeneratorLossGrad g;
  const double n = static_cast<double>(generated.size());
  const Eigen::ArrayXd diff = generated - real;
  g.d_generated = w_rec / n * diff.unaryExpr([](double v) { return double((v > 0) - (v < 0)); });
  g.d_fake_scores = fake_scores.size()
                        ? Eigen::ArrayXd(w_adv * 2.0 / fake_scores.size() * (fake_scores - 1.0))
                        : Eigen::ArrayXd();
  return g;
}

DiscriminatorLossGrad discriminator_loss_grad(const Eigen::ArrayXd& real_scores,
                                              const Eigen::ArrayXd& fake_scores) {
  DiscriminatorLossGrad g;
  g.d_real_scores = (real_scores - 1.0) / static_cast<double>(real_scores.size());
  g.d_fake_scores = fake_scores / static_cast<double>(fake_scores.size());
  return g;
}

}  // namespace simshear::translate
