#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace simshear {

/// Raised when the tip center sits deeper than one tip radius inside an
/// object; the penetration image is meaningless in that regime.
class OverPenetrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when sample_contact cannot find an in-contact configuration.
class ContactSamplingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Wraps an angle in degrees to [-180, 180).
double wrap_degrees(double degrees);

/// 4-DoF pose of a desktop arm: translation in mm and a rotation about the
/// world vertical in degrees.
struct Pose4 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  /// Validating constructor; normalizes yaw and rejects non-finite values.
  static Pose4 make(double x, double y, double z, double yaw);

  Eigen::Vector3d position() const { return {x, y, z}; }
  Eigen::Isometry3d isometry() const;
};

/// a * b: b expressed in a's frame, mapped to a's parent frame.
Pose4 compose(const Pose4& a, const Pose4& b);
Pose4 inverse(const Pose4& pose);

/// Shear pose accumulated since first contact: (x, y, z) in mm and a
/// rotation about the sensor axis in degrees.
struct ShearVector {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double yaw = 0.0;

  Eigen::Vector4d as_vector() const { return {x, y, z, yaw}; }
  ShearVector operator+(const ShearVector& o) const {
    return {x + o.x, y + o.y, z + o.z, yaw + o.yaw};
  }
  bool operator==(const ShearVector&) const = default;
};

/// Displacement of `current` relative to `anchor`, expressed in the anchor's
/// frame: translation R(-anchor.yaw) * (current - anchor), rotation
/// wrap(current.yaw - anchor.yaw).
ShearVector compute_shear_pose(const Pose4& anchor, const Pose4& current);

/// Shear felt by the sensor: where the material point that sat under the
/// sensor at first contact now lies, in the current sensor frame. Both
/// frames are sensor frames expressed in the object's frame. For vertical
/// mounts this equals compute_shear_pose(current, anchor).
ShearVector contact_shear(const Eigen::Isometry3d& anchor_in_object,
                          const Eigen::Isometry3d& current_in_object);

/// Pose4 with the same components as a shear vector.
Pose4 shear_as_pose(const ShearVector& shear);

enum class ShapeKind { kHalfSpace, kBox, kEllipsoid };

std::string to_string(ShapeKind kind);
ShapeKind shape_kind_from_string(const std::string& name);

/// Rigid primitive with an exact signed distance. The local frame is
/// centered on the primitive; the half-space is z <= 0.
class ObjectShape {
 public:
  static ObjectShape half_space(const Pose4& pose);
  /// `half_extents` are the box half sizes along local x, y, z.
  static ObjectShape box(const Pose4& pose, const Eigen::Vector3d& half_extents);
  /// `semi_axes` are the ellipsoid radii along local x, y, z.
  static ObjectShape ellipsoid(const Pose4& pose, const Eigen::Vector3d& semi_axes);

  ShapeKind kind() const { return kind_; }
  const Pose4& pose() const { return pose_; }
  const Eigen::Vector3d& dimensions() const { return dimensions_; }

  /// Copy of this shape placed at `pose`.
  ObjectShape moved_to(const Pose4& pose) const;

  /// Pose of the contact feature used by the data sampler, in world frame.
  /// Surface kinds return the top pole; the box returns the midpoint of the
  /// +x top edge, with the edge running along the feature's y axis and the
  /// box occupying x <= 0, z <= 0 of the feature frame.
  Pose4 feature_frame() const;

 private:
  ObjectShape(ShapeKind kind, const Pose4& pose, const Eigen::Vector3d& dims);

  ShapeKind kind_;
  Pose4 pose_;
  Eigen::Vector3d dimensions_;

  friend double sdf_eval(const ObjectShape&, const Eigen::Vector3d&);
};

/// Signed distance in mm from a world point: negative inside.
double sdf_eval(const ObjectShape& shape, const Eigen::Vector3d& point);

struct SensorGeometry {
  double tip_radius = 25.0;        // mm, hemispherical tip
  int image_size = 64;             // pixels, square
  double sensing_aperture = 32.0;  // mm, square footprint mapped to the image
  double max_depth = 2.5;          // mm, saturation

  void validate() const;
  double pixel_pitch() const { return sensing_aperture / image_size; }
  /// Sensor-plane coordinates (mm) of a pixel center; +y is row 0.
  Eigen::Vector2d pixel_center(int row, int col) const;
  /// Continuous (row, col) of a sensor-plane point.
  Eigen::Vector2d plane_to_pixel(const Eigen::Vector2d& point) const;
};

using DepthArray = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Penetration depth per pixel, mm, within [0, min(max_depth, tip_radius)].
struct DepthImage {
  DepthArray values;
  double max_depth = 0.0;

  bool in_contact() const { return values.size() > 0 && values.maxCoeff() > 0.0; }
};

/// Mount of the tactile sensor on the follower flange. The tip axis is the
/// sensor's -z; vertical mounts point it down, horizontal mounts along -y.
enum class SensorMount { kVertical, kHorizontal };

/// World frame of a sensor carried by an arm at `arm_pose`.
Eigen::Isometry3d sensor_frame(const Pose4& arm_pose, SensorMount mount);

/// Renders penetration depth for a vertically mounted sensor whose tip
/// center is at `sensor_pose`.
DepthImage render_depth(const Pose4& sensor_pose, const ObjectShape& shape,
                        const SensorGeometry& geom);

/// Same, for an arbitrary sensor frame (tip center at the origin).
DepthImage render_depth(const Eigen::Isometry3d& sensor_in_world, const ObjectShape& shape,
                        const SensorGeometry& geom);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  double width() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

/// Sampling bounds for one contact. Depth and angle describe the anchor;
/// lateral placement describes the sheared pose.
struct ContactRanges {
  Interval depth{0.5, 2.0};          // anchor indentation, mm
  Interval shear_xy{-3.0, 3.0};      // mm
  Interval shear_z{-0.25, 0.25};     // mm
  Interval shear_yaw{-10.0, 10.0};   // deg
  Interval edge_angle{-45.0, 45.0};  // deg, edge features only
  Interval edge_offset{-6.0, 0.5};   // mm from the edge, +x off the object
  Interval lateral{-10.0, 10.0};     // mm, along-surface placement
  Interval surface_yaw{-180.0, 180.0};
};

/// Ground-truth label of a sampled contact.
struct ContactLabel {
  double pose_depth = 0.0;  // mm, nominal indentation at the anchor
  double pose_angle = 0.0;  // deg, feature orientation relative to the sensor
  ShearVector shear;
};

struct ContactSample {
  Pose4 anchor;
  Pose4 sheared;
  ContactLabel label;
};

/// Draws an in-contact anchor and a shear offset; both poses are vertical
/// sensor poses in world frame. label.shear is compute_shear_pose(sheared,
/// anchor), the contact's shift as seen from the sheared sensor. Throws
/// ContactSamplingError after a bounded number of rejected draws.
ContactSample sample_contact(const ObjectShape& shape, const ContactRanges& ranges,
                             const SensorGeometry& geom, std::uint64_t seed);

}  // namespace simshear
