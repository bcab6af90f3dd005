#include "simshear/contact_sim.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <utility>

#include "simshear/rng.h"

namespace simshear {
namespace {

constexpr double kDegToRad = M_PI / 180.0;

Eigen::Matrix3d rot_z(double yaw_deg) {
  return Eigen::AngleAxisd(yaw_deg * kDegToRad, Eigen::Vector3d::UnitZ()).toRotationMatrix();
}

Eigen::Vector3d rotate_z(double yaw_deg, const Eigen::Vector3d& v) {
  const double c = std::cos(yaw_deg * kDegToRad);
  const double s = std::sin(yaw_deg * kDegToRad);
  return {c * v.x() - s * v.y(), s * v.x() + c * v.y(), v.z()};
}

Pose4 from_position(const Eigen::Vector3d& p, double yaw) {
  return Pose4::make(p.x(), p.y(), p.z(), yaw);
}

// Point-to-ellipse/ellipsoid distance after D. Eberly, "Distance from a
// Point to an Ellipse, an Ellipsoid, or a Hyperellipsoid". Axes sorted
// descending and the query folded into the first octant.
double robust_length(double a, double b) {
  return std::hypot(a, b);
}

double robust_length(double a, double b, double c) {
  return std::hypot(a, b, c);
}

double ellipse_root(double r0, double z0, double z1, double g) {
  const double n0 = r0 * z0;
  double s0 = z1 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, z1) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0);
    const double b = z1 / (s + 1.0);
    g = a * a + b * b - 1.0;
    if (g > 0.0) {
      s0 = s;
    } else if (g < 0.0) {
      s1 = s;
    } else {
      break;
    }
  }
  return s;
}

double ellipsoid_root(double r0, double r1, double z0, double z1, double z2, double g) {
  const double n0 = r0 * z0;
  const double n1 = r1 * z1;
  double s0 = z2 - 1.0;
  double s1 = g < 0.0 ? 0.0 : robust_length(n0, n1, z2) - 1.0;
  double s = 0.0;
  for (int i = 0; i < 1100; ++i) {
    s = 0.5 * (s0 + s1);
    if (s == s0 || s == s1) break;
    const double a = n0 / (s + r0);
    const double b = n1 / (s + r1);
    const double c = z2 / (s + 1.0);
    g = a * a + b * b + c * c - 1.0;
    if (g > 0.0) {
      s0 = s;
    } else if (g < 0.0) {
      s1 = s;
    } else {
      break;
    }
  }
  return s;
}

// e0 >= e1 > 0, y0, y1 >= 0.
double ellipse_distance(double e0, double e1, double y0, double y1) {
  if (y1 > 0.0) {
    if (y0 > 0.0) {
      const double z0 = y0 / e0;
      const double z1 = y1 / e1;
      const double g = z0 * z0 + z1 * z1 - 1.0;
      if (g == 0.0) return 0.0;
      const double r0 = (e0 / e1) * (e0 / e1);
      const double sbar = ellipse_root(r0, z0, z1, g);
      const double x0 = r0 * y0 / (sbar + r0);
      const double x1 = y1 / (sbar + 1.0);
      return std::hypot(x0 - y0, x1 - y1);
    }
    return std::abs(y1 - e1);
  }
  const double numer0 = e0 * y0;
  const double denom0 = e0 * e0 - e1 * e1;
  if (numer0 < denom0) {
    const double xde0 = numer0 / denom0;
    const double x0 = e0 * xde0;
    const double x1 = e1 * std::sqrt(1.0 - xde0 * xde0);
    return std::hypot(x0 - y0, x1);
  }
  return std::abs(y0 - e0);
}

// e0 >= e1 >= e2 > 0, y0, y1, y2 >= 0.
double ellipsoid_distance(double e0, double e1, double e2, double y0, double y1, double y2) {
  if (y2 > 0.0) {
    if (y1 > 0.0) {
      if (y0 > 0.0) {
        const double z0 = y0 / e0;
        const double z1 = y1 / e1;
        const double z2 = y2 / e2;
        const double g = z0 * z0 + z1 * z1 + z2 * z2 - 1.0;
        if (g == 0.0) return 0.0;
        const double r0 = (e0 / e2) * (e0 / e2);
        const double r1 = (e1 / e2) * (e1 / e2);
        const double sbar = ellipsoid_root(r0, r1, z0, z1, z2, g);
        const double x0 = r0 * y0 / (sbar + r0);
        const double x1 = r1 * y1 / (sbar + r1);
        const double x2 = y2 / (sbar + 1.0);
        return std::sqrt((x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1) + (x2 - y2) * (x2 - y2));
      }
      return ellipse_distance(e1, e2, y1, y2);
    }
    if (y0 > 0.0) return ellipse_distance(e0, e2, y0, y2);
    return std::abs(y2 - e2);
  }
  const double denom0 = e0 * e0 - e2 * e2;
  const double denom1 = e1 * e1 - e2 * e2;
  const double numer0 = e0 * y0;
  const double numer1 = e1 * y1;
  if (numer0 < denom0 && numer1 < denom1) {
    const double xde0 = numer0 / denom0;
    const double xde1 = numer1 / denom1;
    const double discr = 1.0 - xde0 * xde0 - xde1 * xde1;
    if (discr > 0.0) {
      const double x0 = e0 * xde0;
      const double x1 = e1 * xde1;
      const double x2 = e2 * std::sqrt(discr);
      return std::sqrt((x0 - y0) * (x0 - y0) + (x1 - y1) * (x1 - y1) + x2 * x2);
    }
  }
  return ellipse_distance(e0, e1, y0, y1);
}

double ellipsoid_sdf(const Eigen::Vector3d& semi, const Eigen::Vector3d& p) {
  if (semi.x() == semi.y() && semi.y() == semi.z()) return p.norm() - semi.x();
  std::array<std::pair<double, double>, 3> axes{
      {{semi.x(), std::abs(p.x())}, {semi.y(), std::abs(p.y())}, {semi.z(), std::abs(p.z())}}};
  std::sort(axes.begin(), axes.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  const double dist = ellipsoid_distance(axes[0].first, axes[1].first, axes[2].first,
                                         axes[0].second, axes[1].second, axes[2].second);
  const double level = (p.array() / semi.array()).square().sum();
  return level < 1.0 ? -dist : dist;
}

double box_sdf(const Eigen::Vector3d& half, const Eigen::Vector3d& p) {
  const Eigen::Vector3d q = p.cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw std::invalid_argument(std::string("non-finite ") + what);
}

}  // namespace

double wrap_degrees(double degrees) {
  double w = std::fmod(degrees + 180.0, 360.0);
  if (w < 0.0) w += 360.0;
  w -= 180.0;
  // fmod can return exactly 360 - eps rounding up to 180.
  return w >= 180.0 ? w - 360.0 : w;
}

Pose4 Pose4::make(double x, double y, double z, double yaw) {
  check_finite(x, "pose x");
  check_finite(y, "pose y");
  check_finite(z, "pose z");
  check_finite(yaw, "pose yaw");
  return Pose4{x, y, z, wrap_degrees(yaw)};
}

Eigen::Isometry3d Pose4::isometry() const {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.linear() = rot_z(yaw);
  t.translation() = position();
  return t;
}

Pose4 compose(const Pose4& a, const Pose4& b) {
  return from_position(a.position() + rotate_z(a.yaw, b.position()), a.yaw + b.yaw);
}

Pose4 inverse(const Pose4& pose) {
  return from_position(-rotate_z(-pose.yaw, pose.position()), -pose.yaw);
}

ShearVector compute_shear_pose(const Pose4& anchor, const Pose4& current) {
  const Eigen::Vector3d d = rotate_z(-anchor.yaw, current.position() - anchor.position());
  return {d.x(), d.y(), d.z(), wrap_degrees(current.yaw - anchor.yaw)};
}

ShearVector contact_shear(const Eigen::Isometry3d& anchor_in_object,
                          const Eigen::Isometry3d& current_in_object) {
  const Eigen::Isometry3d rel = current_in_object.inverse() * anchor_in_object;
  const Eigen::Vector3d t = rel.translation();
  const double yaw = std::atan2(rel.linear()(1, 0), rel.linear()(0, 0)) / kDegToRad;
  return {t.x(), t.y(), t.z(), wrap_degrees(yaw)};
}

Pose4 shear_as_pose(const ShearVector& shear) {
  return Pose4::make(shear.x, shear.y, shear.z, shear.yaw);
}

std::string to_string(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::kHalfSpace:
      return "half_space";
    case ShapeKind::kBox:
      return "box";
    case ShapeKind::kEllipsoid:
      return "ellipsoid";
  }
  return "unknown";
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "half_space") return ShapeKind::kHalfSpace;
  if (name == "box") return ShapeKind::kBox;
  if (name == "ellipsoid") return ShapeKind::kEllipsoid;
  throw std::invalid_argument("unknown shape kind '" + name + "'");
}

ObjectShape::ObjectShape(ShapeKind kind, const Pose4& pose, const Eigen::Vector3d& dims)
    : kind_(kind), pose_(Pose4::make(pose.x, pose.y, pose.z, pose.yaw)), dimensions_(dims) {
  if (kind != ShapeKind::kHalfSpace) {
    if (!(dims.array() > 0.0).all() || !dims.allFinite())
      throw std::invalid_argument(to_string(kind) + " dimensions must be positive and finite");
  }
}

ObjectShape ObjectShape::half_space(const Pose4& pose) {
  return ObjectShape(ShapeKind::kHalfSpace, pose, Eigen::Vector3d::Zero());
}

ObjectShape ObjectShape::box(const Pose4& pose, const Eigen::Vector3d& half_extents) {
  return ObjectShape(ShapeKind::kBox, pose, half_extents);
}

ObjectShape ObjectShape::ellipsoid(const Pose4& pose, const Eigen::Vector3d& semi_axes) {
  return ObjectShape(ShapeKind::kEllipsoid, pose, semi_axes);
}

ObjectShape ObjectShape::moved_to(const Pose4& pose) const {
  return ObjectShape(kind_, pose, dimensions_);
}

Pose4 ObjectShape::feature_frame() const {
  switch (kind_) {
    case ShapeKind::kHalfSpace:
      return pose_;
    case ShapeKind::kEllipsoid:
      return compose(pose_, Pose4{0.0, 0.0, dimensions_.z(), 0.0});
    case ShapeKind::kBox:
      return compose(pose_, Pose4{dimensions_.x(), 0.0, dimensions_.z(), 0.0});
  }
  return pose_;
}

double sdf_eval(const ObjectShape& shape, const Eigen::Vector3d& point) {
  const Eigen::Vector3d local = rotate_z(-shape.pose_.yaw, point - shape.pose_.position());
  switch (shape.kind_) {
    case ShapeKind::kHalfSpace:
      return local.z();
    case ShapeKind::kBox:
      return box_sdf(shape.dimensions_, local);
    case ShapeKind::kEllipsoid:
      return ellipsoid_sdf(shape.dimensions_, local);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

void SensorGeometry::validate() const {
  if (!(tip_radius > 0.0)) throw std::invalid_argument("tip_radius must be positive");
  if (image_size < 16) throw std::invalid_argument("image_size must be at least 16");
  if (!(sensing_aperture > 0.0)) throw std::invalid_argument("sensing_aperture must be positive");
  if (!(max_depth > 0.0)) throw std::invalid_argument("max_depth must be positive");
}

Eigen::Vector2d SensorGeometry::pixel_center(int row, int col) const {
  const double p = pixel_pitch();
  return {(col + 0.5) * p - 0.5 * sensing_aperture, 0.5 * sensing_aperture - (row + 0.5) * p};
}

Eigen::Vector2d SensorGeometry::plane_to_pixel(const Eigen::Vector2d& point) const {
  const double p = pixel_pitch();
  return {(0.5 * sensing_aperture - point.y()) / p - 0.5,
          (point.x() + 0.5 * sensing_aperture) / p - 0.5};
}

Eigen::Isometry3d sensor_frame(const Pose4& arm_pose, SensorMount mount) {
  Eigen::Isometry3d frame = arm_pose.isometry();
  if (mount == SensorMount::kHorizontal)
    frame.rotate(Eigen::AngleAxisd(-M_PI / 2.0, Eigen::Vector3d::UnitX()));
  return frame;
}

DepthImage render_depth(const Pose4& sensor_pose, const ObjectShape& shape,
                        const SensorGeometry& geom) {
  return render_depth(sensor_pose.isometry(), shape, geom);
}

DepthImage render_depth(const Eigen::Isometry3d& sensor_in_world, const ObjectShape& shape,
                        const SensorGeometry& geom) {
  geom.validate();
  const double r = geom.tip_radius;
  if (sdf_eval(shape, sensor_in_world.translation()) < -r)
    throw OverPenetrationError("sensor tip center is more than one tip radius inside the object");
  const int n = geom.image_size;
  const double cap = std::min(geom.max_depth, r);
  DepthImage out;
  out.max_depth = geom.max_depth;
  out.values = DepthArray::Zero(n, n);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const Eigen::Vector2d xy = geom.pixel_center(row, col);
      const double r2 = xy.squaredNorm();
      if (r2 >= r * r) continue;
      const Eigen::Vector3d tip(xy.x(), xy.y(), -std::sqrt(r * r - r2));
      const double pen = -sdf_eval(shape, sensor_in_world * tip);
      out.values(row, col) = std::clamp(pen, 0.0, cap);
    }
  }
  return out;
}

ContactSample sample_contact(const ObjectShape& shape, const ContactRanges& ranges,
                             const SensorGeometry& geom, std::uint64_t seed) {
  geom.validate();
  Rng rng(seed);
  const bool edge = shape.kind() == ShapeKind::kBox;
  const Pose4 feature = shape.feature_frame();
  const double r = geom.tip_radius;
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    const double depth = rng.uniform(ranges.depth.lo, ranges.depth.hi);
    const ShearVector s{rng.uniform(ranges.shear_xy.lo, ranges.shear_xy.hi),
                        rng.uniform(ranges.shear_xy.lo, ranges.shear_xy.hi),
                        rng.uniform(ranges.shear_z.lo, ranges.shear_z.hi),
                        rng.uniform(ranges.shear_yaw.lo, ranges.shear_yaw.hi)};
    double angle = 0.0;
    double anchor_yaw = 0.0;
    Eigen::Vector2d sheared_xy;
    if (edge) {
      angle = rng.uniform(ranges.edge_angle.lo, ranges.edge_angle.hi);
      anchor_yaw = -angle;
      sheared_xy = {rng.uniform(ranges.edge_offset.lo, ranges.edge_offset.hi),
                    rng.uniform(ranges.lateral.lo, ranges.lateral.hi)};
    } else {
      anchor_yaw = rng.uniform(ranges.surface_yaw.lo, ranges.surface_yaw.hi);
      sheared_xy = {rng.uniform(ranges.lateral.lo, ranges.lateral.hi),
                    rng.uniform(ranges.lateral.lo, ranges.lateral.hi)};
    }
    // The sheared sensor sees the anchor point at s: anchor = sheared * s.
    const double sheared_yaw = anchor_yaw - s.yaw;
    const Eigen::Vector3d offset = rotate_z(sheared_yaw, Eigen::Vector3d(s.x, s.y, 0.0));
    const Eigen::Vector2d anchor_xy = sheared_xy + offset.head<2>();

    // Anchor height in the feature frame for the nominal indentation.
    double anchor_z = r - depth;
    if (shape.kind() == ShapeKind::kEllipsoid) {
      // Convex surface: a ball's deepest penetration is r - sdf(center).
      const double target = r - depth;
      double lo = -shape.dimensions().z();
      double hi = target + r;
      const Eigen::Vector3d probe(anchor_xy.x(), anchor_xy.y(), 0.0);
      auto sd = [&](double z) {
        return sdf_eval(shape, compose(feature, Pose4{probe.x(), probe.y(), z, 0.0}).position());
      };
      if (sd(lo) > target) continue;
      for (int i = 0; i < 80; ++i) {
        const double mid = 0.5 * (lo + hi);
        (sd(mid) < target ? lo : hi) = mid;
      }
      anchor_z = 0.5 * (lo + hi);
    }
    const Pose4 anchor_local =
        Pose4::make(anchor_xy.x(), anchor_xy.y(), anchor_z, anchor_yaw);
    const Pose4 sheared_local =
        Pose4::make(sheared_xy.x(), sheared_xy.y(), anchor_z - s.z, sheared_yaw);
    ContactSample out;
    out.anchor = compose(feature, anchor_local);
    out.sheared = compose(feature, sheared_local);
    try {
      if (!render_depth(out.anchor, shape, geom).in_contact()) continue;
      if (!render_depth(out.sheared, shape, geom).in_contact()) continue;
    } catch (const OverPenetrationError&) {
      continue;
    }
    out.label.pose_depth = depth;
    out.label.pose_angle = angle;
    out.label.shear = compute_shear_pose(out.sheared, out.anchor);
    return out;
  }
  throw ContactSamplingError("no in-contact pose after " + std::to_string(kMaxAttempts) +
                             " draws for " + to_string(shape.kind()) + " (depth range [" +
                             std::to_string(ranges.depth.lo) + ", " +
                             std::to_string(ranges.depth.hi) + "] mm)");
}

}  // namespace simshear
