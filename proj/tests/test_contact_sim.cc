#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "simshear/contact_sim.h"

namespace simshear {
namespace {

// Pixel centers computed from the aperture directly, independent of
// SensorGeometry::pixel_center. Row 0 is +y.
Eigen::Vector2d pixel_xy(const SensorGeometry& g, int row, int col) {
  const double pitch = g.sensing_aperture / g.image_size;
  return {-0.5 * g.sensing_aperture + (col + 0.5) * pitch, 0.5 * g.sensing_aperture - (row + 0.5) * pitch};
}

// Textbook axis-aligned box SDF (box centered at the origin).
double box_sdf(const Eigen::Vector3d& p, const Eigen::Vector3d& half) {
  const Eigen::Vector3d q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

TEST(ContactSim, SpherePlaneProfileMatchesAnalyticPenetration) {
  SensorGeometry g;
  g.tip_radius = 10.0;
  const DepthImage d = render_depth(Pose4::make(0, 0, 9, 0), ObjectShape::half_space({}), g);
  for (int r = 0; r < g.image_size; ++r)
    for (int c = 0; c < g.image_size; ++c) {
      const double rho2 = pixel_xy(g, r, c).squaredNorm();
      const double expected = rho2 < 100.0 ? std::max(0.0, 1.0 - (10.0 - std::sqrt(100.0 - rho2))) : 0.0;
      ASSERT_NEAR(d.values(r, c), expected, 1e-9) << r << "," << c;
    }
  // The four pixels around the axis sit 0.354 mm off center.
  EXPECT_NEAR(d.values.maxCoeff(), 1.0 - (10.0 - std::sqrt(100.0 - 0.125)), 1e-12);
}

TEST(ContactSim, NoContactGivesZeroImage) {
  SensorGeometry g;
  g.tip_radius = 10.0;
  const DepthImage d = render_depth(Pose4::make(0, 0, 25, 0), ObjectShape::half_space({}), g);
  EXPECT_EQ(d.values.maxCoeff(), 0.0);
  EXPECT_FALSE(d.in_contact());
}

TEST(ContactSim, BoxEdgeRidgeMatchesBruteForceSdf) {
  SensorGeometry g;
  // Box top at z = 0, body on x <= 0: the +x top edge runs along y under the tip.
  const Eigen::Vector3d half(50, 50, 10), center(-50, 0, -10);
  const ObjectShape box = ObjectShape::box(Pose4::make(center.x(), center.y(), center.z(), 0), half);
  const double tip_z = g.tip_radius - 1.0;
  const DepthImage d = render_depth(Pose4::make(0, 0, tip_z, 0), box, g);
  std::vector<int> ridge_cols;
  for (int r = 0; r < g.image_size; ++r) {
    int best = -1;
    double best_v = 0.0;
    for (int c = 0; c < g.image_size; ++c) {
      const Eigen::Vector2d xy = pixel_xy(g, r, c);
      double expected = 0.0;
      if (xy.squaredNorm() < g.tip_radius * g.tip_radius) {
        const Eigen::Vector3d p(xy.x(), xy.y(), tip_z - std::sqrt(g.tip_radius * g.tip_radius - xy.squaredNorm()));
        expected = std::clamp(-box_sdf(p - center, half), 0.0, g.max_depth);
      }
      ASSERT_NEAR(d.values(r, c), expected, 1e-9);
      if (d.values(r, c) > best_v) {
        best_v = d.values(r, c);
        best = c;
      }
    }
    if (best >= 0) ridge_cols.push_back(best);
  }
  ASSERT_GT(ridge_cols.size(), 10u);
  // Ridge parallel to the edge, on the body side within the indentation.
  const auto [lo, hi] = std::minmax_element(ridge_cols.begin(), ridge_cols.end());
  EXPECT_LE(*hi - *lo, 2);
  for (int c : ridge_cols) {
    const double x = pixel_xy(g, 0, c).x();
    EXPECT_LT(x, 0.0);
    EXPECT_GT(x, -1.5);
  }
}

TEST(ContactSim, ShearPoseExamples) {
  const ShearVector id = compute_shear_pose(Pose4::make(3, -2, 7, 33), Pose4::make(3, -2, 7, 33));
  EXPECT_EQ(id.as_vector(), Eigen::Vector4d::Zero());
  const ShearVector a = compute_shear_pose(Pose4::make(0, 0, 10, 0), Pose4::make(2, -1, 10, 5));
  EXPECT_NEAR(a.x, 2, 1e-12);
  EXPECT_NEAR(a.y, -1, 1e-12);
  EXPECT_NEAR(a.z, 0, 1e-12);
  EXPECT_NEAR(a.yaw, 5, 1e-12);
  const ShearVector b = compute_shear_pose(Pose4::make(0, 0, 10, 90), Pose4::make(1, 0, 10, 90));
  EXPECT_NEAR(b.x, 0, 1e-12);
  EXPECT_NEAR(b.y, -1, 1e-12);
  EXPECT_NEAR(b.yaw, 0, 1e-12);
}

TEST(ContactSim, ShearPoseIsEquivariantUnderCommonMotion) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> pos(-50, 50), ang(-180, 180);
  for (int i = 0; i < 500; ++i) {
    const Pose4 a = Pose4::make(pos(gen), pos(gen), pos(gen), ang(gen));
    const Pose4 c = Pose4::make(pos(gen), pos(gen), pos(gen), ang(gen));
    const Pose4 m = Pose4::make(pos(gen), pos(gen), pos(gen), ang(gen));
    const ShearVector s0 = compute_shear_pose(a, c);
    const ShearVector s1 = compute_shear_pose(compose(m, a), compose(m, c));
    EXPECT_NEAR(s0.x, s1.x, 1e-9);
    EXPECT_NEAR(s0.y, s1.y, 1e-9);
    EXPECT_NEAR(s0.z, s1.z, 1e-9);
    EXPECT_NEAR(wrap_degrees(s0.yaw - s1.yaw), 0.0, 1e-9);
    const ShearVector self = compute_shear_pose(a, a);
    EXPECT_EQ(self.as_vector(), Eigen::Vector4d::Zero());
  }
}

TEST(ContactSim, ContactShearMatchesSwappedShearPoseForVerticalMount) {
  const Pose4 anchor = Pose4::make(1, 2, 20, 30), current = Pose4::make(2.5, 1, 19.5, 41);
  const ShearVector a = contact_shear(anchor.isometry(), current.isometry());
  const ShearVector b = compute_shear_pose(current, anchor);
  EXPECT_NEAR((a.as_vector() - b.as_vector()).norm(), 0.0, 1e-9);
}

TEST(ContactSim, SdfIsOneLipschitz) {
  const std::vector<ObjectShape> shapes{
      ObjectShape::half_space(Pose4::make(1, 2, -3, 20)),
      ObjectShape::box(Pose4::make(-5, 3, 0, 35), {10, 4, 6}),
      ObjectShape::ellipsoid(Pose4::make(2, 0, 1, -60), {12, 5, 3})};
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-30, 30), small(-2, 2);
  for (const auto& s : shapes)
    for (int i = 0; i < 20000; ++i) {
      const Eigen::Vector3d p(u(gen), u(gen), u(gen));
      const Eigen::Vector3d q = i % 2 ? Eigen::Vector3d(u(gen), u(gen), u(gen))
                                      : Eigen::Vector3d(p + Eigen::Vector3d(small(gen), small(gen), small(gen)));
      ASSERT_LE(std::abs(sdf_eval(s, p) - sdf_eval(s, q)), (p - q).norm() + 1e-9) << to_string(s.kind());
    }
}

TEST(ContactSim, HalfSpaceImageIsYawInvariant) {
  const SensorGeometry g;
  const auto plane = ObjectShape::half_space({});
  const DepthImage d0 = render_depth(Pose4::make(0, 0, g.tip_radius - 1.5, 0), plane, g);
  // Rotationally averaged profile in 0.5 mm bins.
  auto profile = [&](const DepthImage& d) {
    std::vector<double> sum(40, 0.0), n(40, 0.0);
    for (int r = 0; r < g.image_size; ++r)
      for (int c = 0; c < g.image_size; ++c) {
        const int bin = std::min(39, static_cast<int>(pixel_xy(g, r, c).norm() / 0.5));
        sum[bin] += d.values(r, c);
        n[bin] += 1;
      }
    for (int i = 0; i < 40; ++i) sum[i] = n[i] > 0 ? sum[i] / n[i] : 0.0;
    return sum;
  };
  const auto p0 = profile(d0);
  for (double yaw : {17.0, 90.0, -135.0}) {
    const auto p = profile(render_depth(Pose4::make(0, 0, g.tip_radius - 1.5, yaw), plane, g));
    for (size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(p[i], p0[i], 1e-6);
  }
}

TEST(ContactSim, DepthBoundedByMaxDepthAndTipRadius) {
  SensorGeometry g;
  const auto plane = ObjectShape::half_space({});
  const DepthImage deep = render_depth(Pose4::make(0, 0, g.tip_radius - 6, 0), plane, g);
  EXPECT_DOUBLE_EQ(deep.values.maxCoeff(), g.max_depth);
  EXPECT_GE(deep.values.minCoeff(), 0.0);
  g.tip_radius = 2.0;
  g.sensing_aperture = 8.0;
  const DepthImage small = render_depth(Pose4::make(0, 0, 0.5, 0), plane, g);
  EXPECT_LE(small.values.maxCoeff(), 2.0);
}

TEST(ContactSim, OverPenetrationThrows) {
  const SensorGeometry g;
  EXPECT_THROW(render_depth(Pose4::make(0, 0, -g.tip_radius - 1, 0), ObjectShape::half_space({}), g),
               OverPenetrationError);
}

TEST(ContactSim, PoseValidationAndYawWrap) {
  EXPECT_DOUBLE_EQ(Pose4::make(0, 0, 0, 180).yaw, -180.0);
  EXPECT_DOUBLE_EQ(Pose4::make(0, 0, 0, 190).yaw, -170.0);
  EXPECT_DOUBLE_EQ(Pose4::make(0, 0, 0, -540).yaw, -180.0);
  EXPECT_THROW(Pose4::make(NAN, 0, 0, 0), std::invalid_argument);
  EXPECT_THROW(Pose4::make(0, 0, 0, INFINITY), std::invalid_argument);
  EXPECT_THROW(ObjectShape::box({}, {1, 0, 1}), std::invalid_argument);
  SensorGeometry g;
  g.image_size = 8;
  EXPECT_THROW(g.validate(), std::invalid_argument);
}

TEST(ContactSim, ComposeInverseRoundTrip) {
  const Pose4 a = Pose4::make(3, -4, 5, 70), b = Pose4::make(-1, 2, 0.5, -20);
  const Pose4 c = compose(inverse(a), compose(a, b));
  EXPECT_NEAR(c.x, b.x, 1e-12);
  EXPECT_NEAR(c.y, b.y, 1e-12);
  EXPECT_NEAR(c.z, b.z, 1e-12);
  EXPECT_NEAR(c.yaw, b.yaw, 1e-12);
}

ContactRanges degenerate() {
  ContactRanges r;
  r.depth = {1.0, 1.0};
  r.shear_xy = r.shear_z = r.shear_yaw = {0.0, 0.0};
  r.edge_angle = {10.0, 10.0};
  r.edge_offset = {-1.0, -1.0};
  r.lateral = {0.0, 0.0};
  r.surface_yaw = {0.0, 0.0};
  return r;
}

TEST(SampleContact, ZeroWidthRangesGiveZeroShear) {
  const SensorGeometry g;
  for (const auto& shape : {ObjectShape::half_space({}), ObjectShape::box(Pose4::make(-50, 0, -10, 0), {50, 50, 10})}) {
    const ContactSample s = sample_contact(shape, degenerate(), g, 3);
    EXPECT_NEAR(s.anchor.x, s.sheared.x, 1e-12);
    EXPECT_NEAR(s.anchor.y, s.sheared.y, 1e-12);
    EXPECT_NEAR(s.anchor.z, s.sheared.z, 1e-12);
    EXPECT_NEAR(s.anchor.yaw, s.sheared.yaw, 1e-12);
    EXPECT_NEAR(s.label.shear.as_vector().norm(), 0.0, 1e-12);
  }
}

TEST(SampleContact, DeterministicPerSeed) {
  const SensorGeometry g;
  const auto box = ObjectShape::box(Pose4::make(-50, 0, -10, 0), {50, 50, 10});
  const ContactSample a = sample_contact(box, {}, g, 99), b = sample_contact(box, {}, g, 99);
  EXPECT_EQ(a.sheared.x, b.sheared.x);
  EXPECT_EQ(a.anchor.yaw, b.anchor.yaw);
  EXPECT_EQ(a.label.shear, b.label.shear);
  EXPECT_EQ(a.label.pose_angle, b.label.pose_angle);
}

TEST(SampleContact, LabelsConsistentAndInContact) {
  const SensorGeometry g;
  const ContactRanges ranges;
  const auto box = ObjectShape::box(Pose4::make(-50, 0, -10, 0), {50, 50, 10});
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto& shape = seed % 2 ? box : ObjectShape::half_space({});
    const ContactSample s = sample_contact(shape, ranges, g, seed);
    const ShearVector expected = compute_shear_pose(s.sheared, s.anchor);
    EXPECT_NEAR((s.label.shear.as_vector() - expected.as_vector()).norm(), 0.0, 1e-9);
    EXPECT_TRUE(ranges.depth.contains(s.label.pose_depth));
    EXPECT_GE(s.label.pose_depth, 0.0);
    EXPECT_TRUE(render_depth(s.anchor, shape, g).in_contact());
    EXPECT_TRUE(render_depth(s.sheared, shape, g).in_contact());
  }
}

TEST(SampleContact, ShearLabelsApproximatelyUniform) {
  const SensorGeometry g;
  const ContactRanges ranges;
  const auto plane = ObjectShape::half_space({});
  std::vector<int> quartiles(4, 0);
  double sum_x = 0.0, sum_y = 0.0;
  constexpr int kN = 1000;
  for (int i = 0; i < kN; ++i) {
    const ShearVector s = sample_contact(plane, ranges, g, 1000 + i).label.shear;
    ASSERT_LE(std::abs(s.x), 3.0);
    ASSERT_LE(std::abs(s.y), 3.0);
    sum_x += s.x;
    sum_y += s.y;
    ++quartiles[std::min(3, static_cast<int>((s.x + 3.0) / 1.5))];
  }
  EXPECT_LT(std::abs(sum_x / kN), 0.2);
  EXPECT_LT(std::abs(sum_y / kN), 0.2);
  // Each quarter of [-3, 3] holds 250 +- 4 standard deviations (~55).
  for (int q : quartiles) EXPECT_NEAR(q, kN / 4, 55);
}

TEST(SampleContact, UnreachableRangesThrow) {
  ContactRanges r;
  r.depth = {0.5, 1.0};
  r.lateral = {500.0, 600.0};
  EXPECT_THROW(sample_contact(ObjectShape::ellipsoid({}, {5, 5, 5}), r, SensorGeometry{}, 1), ContactSamplingError);
}

}  // namespace
}  // namespace simshear
