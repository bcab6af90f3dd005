#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "simshear/contact_sim.h"

namespace simshear {

using ImageArray = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ImageDomain { kSim, kRealSynthetic, kGenerated };

std::string to_string(ImageDomain domain);

/// Grayscale tactile image with pixels in [0, 1].
struct TactileImage {
  ImageArray values;
  ImageDomain domain = ImageDomain::kSim;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

/// Reference marker layout of the synthetic membrane, sensor-plane mm.
struct MarkerGrid {
  std::vector<Eigen::Vector2d> positions;
  double blob_sigma = 0.45;

  /// Hexagonal packing: `rings` = 10 gives 331 markers.
  static MarkerGrid hexagonal(int rings = 10, double spacing = 1.5, double blob_sigma = 0.45);

  /// Throws if a marker leaves the aperture or two markers sit closer than
  /// 2 * blob_sigma.
  void validate(const SensorGeometry& geom) const;
};

struct MembraneParams {
  double alpha = 3.0;             // mm per unit depth gradient
  double beta = 0.8;              // lateral shear coupling
  double gamma = 0.8;             // rotational shear coupling
  double kappa = 0.1;             // per mm of vertical shear
  double contact_softness = 2.0;  // mm

  void validate() const;
};

struct MarkerField {
  std::vector<Eigen::Vector2d> positions;
  std::vector<double> scales;
};

/// depth / max_depth.
TactileImage sim_tactile_image(const DepthImage& depth);

/// Depth smoothed by a zero-padded Gaussian of std `length_mm`.
DepthArray smooth_depth(const DepthImage& depth, double length_mm, const SensorGeometry& geom);

/// Displaced marker centers and blob scales for a contact with shear.
MarkerField marker_displacement_field(const DepthImage& depth, const ShearVector& shear,
                                      const MarkerGrid& grid, const MembraneParams& params,
                                      const SensorGeometry& geom);

/// Sum of Gaussian blobs, clamped to [0, 1].
TactileImage render_markers(const MarkerField& field, const SensorGeometry& geom);

/// Synthetic real sensor: render_markers(marker_displacement_field(...)).
TactileImage real_tactile_oracle(const DepthImage& depth, const ShearVector& shear,
                                 const MarkerGrid& grid, const MembraneParams& params,
                                 const SensorGeometry& geom);

/// Markers at rest.
TactileImage resting_template(const MarkerGrid& grid, const SensorGeometry& geom);

/// Adds uniform noise in [-amplitude, amplitude] and re-clamps. No-op at 0.
void add_uniform_noise(TactileImage& image, double amplitude, std::uint64_t seed);

}  // namespace simshear
