#include <gtest/gtest.h>

#include <cmath>

#include "simshear/image_io.h"
#include "simshear/sensor_models.h"
#include "simshear/translate/metrics.h"

#ifndef SIMSHEAR_FIXTURE_DIR
#error "SIMSHEAR_FIXTURE_DIR must point at tests/fixtures"
#endif

namespace simshear {
namespace {

const SensorGeometry kGeom;
const MembraneParams kParams;
const MarkerGrid kGrid = MarkerGrid::hexagonal();

DepthImage centered_contact(double indentation = 1.5) {
  return render_depth(Pose4::make(0, 0, kGeom.tip_radius - indentation, 0), ObjectShape::half_space({}), kGeom);
}

TEST(Markers, HexagonalGridValid) {
  EXPECT_EQ(kGrid.positions.size(), 331u);
  EXPECT_NO_THROW(kGrid.validate(kGeom));
  for (const auto& p : kGrid.positions) {
    EXPECT_LE(std::abs(p.x()), kGeom.sensing_aperture / 2);
    EXPECT_LE(std::abs(p.y()), kGeom.sensing_aperture / 2);
  }
  double closest = 1e9;
  for (size_t i = 0; i < kGrid.positions.size(); ++i)
    for (size_t j = i + 1; j < kGrid.positions.size(); ++j)
      closest = std::min(closest, (kGrid.positions[i] - kGrid.positions[j]).norm());
  EXPECT_NEAR(closest, 1.5, 1e-12);
  EXPECT_GT(closest, 2 * kGrid.blob_sigma);
  EXPECT_THROW(MarkerGrid::hexagonal(10, 1.5, 0.8).validate(kGeom), std::invalid_argument);
  EXPECT_THROW(MarkerGrid::hexagonal(12, 1.5, 0.45).validate(kGeom), std::invalid_argument);
}

TEST(Markers, MembraneParamsValidate) {
  MembraneParams p;
  p.beta = -0.1;
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.contact_softness = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

TEST(Markers, EmptyFieldRendersBlack) {
  const TactileImage img = render_markers({}, kGeom);
  EXPECT_EQ(img.values.maxCoeff(), 0.0f);
  EXPECT_EQ(img.domain, ImageDomain::kRealSynthetic);
}

TEST(Markers, SingleBlobPeaksAtCenterWithFourFoldSymmetry) {
  SensorGeometry g;
  g.image_size = 33;
  g.sensing_aperture = 33.0;  // 1 mm pixels, one pixel centered on the axis
  const TactileImage img = render_markers({{Eigen::Vector2d::Zero()}, {2.0}}, g);
  Eigen::Index r, c;
  img.values.maxCoeff(&r, &c);
  EXPECT_EQ(r, 16);
  EXPECT_EQ(c, 16);
  for (int i = 0; i < 33; ++i)
    for (int j = 0; j < 33; ++j) {
      EXPECT_FLOAT_EQ(img.values(i, j), img.values(32 - i, j));
      EXPECT_FLOAT_EQ(img.values(i, j), img.values(i, 32 - j));
      EXPECT_FLOAT_EQ(img.values(i, j), img.values(j, i));
    }
}

TEST(Markers, RestingTemplateMatchesGoldenFile) {
  const ImageArray golden = read_png_gray(std::string(SIMSHEAR_FIXTURE_DIR) + "/resting_template_64.png");
  const TactileImage t = resting_template(kGrid, kGeom);
  ASSERT_EQ(golden.rows(), t.rows());
  ASSERT_EQ(golden.cols(), t.cols());
  for (Eigen::Index i = 0; i < golden.size(); ++i)
    ASSERT_EQ(quantize_8bit(t.values.data()[i]), golden.data()[i]) << "pixel " << i;
}

TEST(SimImage, IsNormalizedDepth) {
  const DepthImage d = centered_contact();
  const TactileImage s = sim_tactile_image(d);
  EXPECT_EQ(s.domain, ImageDomain::kSim);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    EXPECT_FLOAT_EQ(s.values.data()[i], static_cast<float>(d.values.data()[i] / d.max_depth));
  EXPECT_GE(s.values.minCoeff(), 0.0f);
  EXPECT_LE(s.values.maxCoeff(), 1.0f);
}

TEST(Oracle, ZeroDepthGivesRestingTemplate) {
  DepthImage none = render_depth(Pose4::make(0, 0, 100, 0), ObjectShape::half_space({}), kGeom);
  const TactileImage a = real_tactile_oracle(none, {2, -1, 0.2, 5}, kGrid, kParams, kGeom);
  const TactileImage t = resting_template(kGrid, kGeom);
  EXPECT_TRUE((a.values == t.values).all());
}

TEST(Oracle, PureShearMovesContactMarkersAlongShear) {
  const DepthImage d = centered_contact();
  const MarkerField rest = marker_displacement_field(d, {}, kGrid, kParams, kGeom);
  const MarkerField sheared = marker_displacement_field(d, {2, 0, 0, 0}, kGrid, kParams, kGeom);
  Eigen::Vector2d net = Eigen::Vector2d::Zero();
  int moved = 0;
  for (size_t i = 0; i < rest.positions.size(); ++i) {
    const Eigen::Vector2d u = sheared.positions[i] - rest.positions[i];
    if (u.norm() > 0) {
      ++moved;
      EXPECT_GT(u.x(), 0.0);
      EXPECT_NEAR(u.y(), 0.0, 1e-12);
    }
    net += u;
  }
  EXPECT_GT(moved, 20);
  EXPECT_LT(std::abs(std::atan2(net.y(), net.x())) * 180 / M_PI, 1.0);
}

TEST(Oracle, DisplacementLinearInLateralAndRotationalShear) {
  const DepthImage d = render_depth(Pose4::make(1.5, -2, kGeom.tip_radius - 1.2, 0),
                                    ObjectShape::box(Pose4::make(-50, 0, -10, 0), {50, 50, 10}), kGeom);
  ASSERT_TRUE(d.in_contact());
  const ShearVector s1{1.0, 0.5, 0, 3}, s2{-0.3, 1.0, 0, -2};
  const MarkerField f0 = marker_displacement_field(d, {}, kGrid, kParams, kGeom);
  const MarkerField f1 = marker_displacement_field(d, s1, kGrid, kParams, kGeom);
  const MarkerField f2 = marker_displacement_field(d, s2, kGrid, kParams, kGeom);
  const MarkerField f12 = marker_displacement_field(d, s1 + s2, kGrid, kParams, kGeom);
  for (size_t i = 0; i < f0.positions.size(); ++i) {
    const Eigen::Vector2d lhs = f12.positions[i] - f0.positions[i];
    const Eigen::Vector2d rhs = (f1.positions[i] - f0.positions[i]) + (f2.positions[i] - f0.positions[i]);
    ASSERT_NEAR((lhs - rhs).norm(), 0.0, 1e-9);
  }
}

TEST(Oracle, OppositeShearsAreMirrorImages) {
  const DepthImage d = centered_contact();
  const TactileImage a = real_tactile_oracle(d, {1, 0, 0, 0}, kGrid, kParams, kGeom);
  const TactileImage b = real_tactile_oracle(d, {-1, 0, 0, 0}, kGrid, kParams, kGeom);
  const ImageArray flipped = b.values.rowwise().reverse();
  EXPECT_LT((a.values - flipped).abs().maxCoeff(), 1e-5f);
  EXPECT_GT((a.values - b.values).abs().maxCoeff(), 0.1f);
}

TEST(Oracle, DifferenceGrowsWithShearMagnitude) {
  const DepthImage d = centered_contact();
  const TactileImage base = real_tactile_oracle(d, {}, kGrid, kParams, kGeom);
  double prev = 0.0;
  for (double m : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    const double e = translate::mape(real_tactile_oracle(d, {m * 0.6, m * 0.8, 0, 0}, kGrid, kParams, kGeom), base);
    EXPECT_GT(e, prev) << m;
    prev = e;
  }
}

TEST(Oracle, DistinctShearsGiveDistinctImages) {
  const DepthImage d = centered_contact(1.0);
  const std::vector<ShearVector> shears{{0, 0, 0, 0}, {1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 0, 8}, {-2, 2, 0, -5}, {2, 2, 0, 0}};
  for (size_t i = 0; i < shears.size(); ++i)
    for (size_t j = i + 1; j < shears.size(); ++j) {
      const auto a = real_tactile_oracle(d, shears[i], kGrid, kParams, kGeom);
      const auto b = real_tactile_oracle(d, shears[j], kGrid, kParams, kGeom);
      EXPECT_GE(translate::mape(a, b), 1e-3) << i << " vs " << j;
    }
}

TEST(Oracle, VerticalShearChangesBlobScale) {
  const DepthImage d = centered_contact();
  const MarkerField up = marker_displacement_field(d, {0, 0, 0.25, 0}, kGrid, kParams, kGeom);
  const MarkerField down = marker_displacement_field(d, {0, 0, -0.25, 0}, kGrid, kParams, kGeom);
  bool any = false;
  for (size_t i = 0; i < up.scales.size(); ++i) {
    EXPECT_GE(up.scales[i], down.scales[i]);
    any = any || up.scales[i] > down.scales[i];
  }
  EXPECT_TRUE(any);
}

TEST(Oracle, DeterministicBytes) {
  const DepthImage d = centered_contact();
  const auto a = real_tactile_oracle(d, {1.2, -0.7, 0.1, 4}, kGrid, kParams, kGeom);
  const auto b = real_tactile_oracle(d, {1.2, -0.7, 0.1, 4}, kGrid, kParams, kGeom);
  ASSERT_EQ(a.values.size(), b.values.size());
  EXPECT_EQ(std::memcmp(a.values.data(), b.values.data(), sizeof(float) * a.values.size()), 0);
  for (Eigen::Index i = 0; i < a.values.size(); ++i) {
    EXPECT_GE(a.values.data()[i], 0.0f);
    EXPECT_LE(a.values.data()[i], 1.0f);
  }
}

// Plateau-safe local maxima: strictly above earlier neighbors, at least as
// high as later ones.
int count_local_maxima(const ImageArray& im, float floor) {
  int count = 0;
  for (int r = 0; r < im.rows(); ++r)
    for (int c = 0; c < im.cols(); ++c) {
      const float v = im(r, c);
      if (v < floor) continue;
      bool peak = true;
      for (int dr = -1; dr <= 1 && peak; ++dr)
        for (int dc = -1; dc <= 1 && peak; ++dc) {
          if (!dr && !dc) continue;
          const int rr = r + dr, cc = c + dc;
          if (rr < 0 || cc < 0 || rr >= im.rows() || cc >= im.cols()) continue;
          const bool earlier = dr < 0 || (dr == 0 && dc < 0);
          peak = earlier ? v > im(rr, cc) : v >= im(rr, cc);
        }
      count += peak;
    }
  return count;
}

TEST(Oracle, MarkerCountConserved) {
  // 1 px = 0.25 mm so each 0.45 mm blob spans a few pixels.
  SensorGeometry g;
  g.image_size = 128;
  const DepthImage d = render_depth(Pose4::make(0, 0, g.tip_radius - 1.0, 0), ObjectShape::half_space({}), g);
  for (const ShearVector& s : {ShearVector{}, ShearVector{0.5, -0.3, 0, 2}}) {
    const MarkerField f = marker_displacement_field(d, s, kGrid, kParams, g);
    double closest = 1e9, widest = 0.0;
    for (size_t i = 0; i < f.positions.size(); ++i) {
      widest = std::max(widest, f.scales[i]);
      for (size_t j = i + 1; j < f.positions.size(); ++j)
        closest = std::min(closest, (f.positions[i] - f.positions[j]).norm());
    }
    ASSERT_GT(closest, 2 * widest);
    EXPECT_EQ(count_local_maxima(render_markers(f, g).values, 0.5f), static_cast<int>(kGrid.positions.size()));
  }
}

TEST(Oracle, NoiseIsSeededAndClamped) {
  TactileImage a = resting_template(kGrid, kGeom), b = a, c = a;
  add_uniform_noise(a, 0.1, 4);
  add_uniform_noise(b, 0.1, 4);
  EXPECT_TRUE((a.values == b.values).all());
  EXPECT_GE(a.values.minCoeff(), 0.0f);
  EXPECT_LE(a.values.maxCoeff(), 1.0f);
  add_uniform_noise(c, 0.0, 4);
  EXPECT_TRUE((c.values == resting_template(kGrid, kGeom).values).all());
}

}  // namespace
}  // namespace simshear
