#pragma once

#include <stdexcept>

#include <Eigen/Core>

#include "simshear/sensor_models.h"

namespace simshear::translate {

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Mean absolute pixel error on the [0, 1] scale.
double mape(const ImageArray& a, const ImageArray& b);
inline double mape(const TactileImage& a, const TactileImage& b) { return mape(a.values, b.values); }

/// SSIM with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2, C2 = 0.03^2,
/// averaged over all fully contained windows.
double ssim(const ImageArray& a, const ImageArray& b);
inline double ssim(const TactileImage& a, const TactileImage& b) { return ssim(a.values, b.values); }

struct TranslatorLosses {
  double generator = 0.0;
  double discriminator = 0.0;
  double reconstruction = 0.0;  // MAPE term before weighting
  double adversarial = 0.0;     // least-squares term before weighting
};

/// generator = w_rec * mean|generated - real| + w_adv * mean (fake - 1)^2;
/// discriminator = 0.5 * mean (real_score - 1)^2 + 0.5 * mean fake_score^2.
TranslatorLosses translator_loss(const Eigen::ArrayXd& generated, const Eigen::ArrayXd& real,
                                 const Eigen::ArrayXd& fake_scores,
                                 const Eigen::ArrayXd& real_scores, double w_rec, double w_adv);

struct GeneratorLossGrad {
  Eigen::ArrayXd d_generated;
  Eigen::ArrayXd d_fake_scores;
};

/// Gradient of the generator loss; the L1 subgradient at equality is 0.
GeneratorLossGrad generator_loss_grad(const Eigen::ArrayXd& generated, const Eigen::ArrayXd& real,
                                      const Eigen::ArrayXd& fake_scores, double w_rec,
                                      double w_adv);

struct DiscriminatorLossGrad {
  Eigen::ArrayXd d_real_scores;
  Eigen::ArrayXd d_fake_scores;
};

DiscriminatorLossGrad discriminator_loss_grad(const Eigen::ArrayXd& real_scores,
                                              const Eigen::ArrayXd& fake_scores);

}  // namespace simshear::translate
