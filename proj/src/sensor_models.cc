#include "simshear/sensor_models.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "simshear/rng.h"

namespace simshear {
namespace {

std::vector<double> gaussian_kernel(double sigma_px) {
  const int radius = static_cast<int>(4.0 * sigma_px + 0.5);
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    k[i + radius] = std::exp(-0.5 * (i * i) / (sigma_px * sigma_px));
    sum += k[i + radius];
  }
  for (double& v : k) v /= sum;
  return k;
}

// Zero-padded separable convolution.
DepthArray convolve_separable(const DepthArray& in, const std::vector<double>& k) {
  const int radius = static_cast<int>(k.size() / 2);
  const int rows = static_cast<int>(in.rows());
  const int cols = static_cast<int>(in.cols());
  DepthArray tmp = DepthArray::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        const int cc = c + j;
        if (cc >= 0 && cc < cols) acc += k[j + radius] * in(r, cc);
      }
      tmp(r, c) = acc;
    }
  DepthArray out = DepthArray::Zero(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      double acc = 0.0;
      for (int j = -radius; j <= radius; ++j) {
        const int rr = r + j;
        if (rr >= 0 && rr < rows) acc += k[j + radius] * tmp(rr, c);
      }
      out(r, c) = acc;
    }
  return out;
}

// Derivative along rows (axis 0) or cols (axis 1) in index units; central
// differences inside, one-sided at the border.
DepthArray index_gradient(const DepthArray& f, int axis) {
  const int rows = static_cast<int>(f.rows());
  const int cols = static_cast<int>(f.cols());
  DepthArray g(rows, cols);
  const int n = axis == 0 ? rows : cols;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      const int i = axis == 0 ? r : c;
      auto at = [&](int k) { return axis == 0 ? f(k, c) : f(r, k); };
      if (i == 0) {
        g(r, c) = at(1) - at(0);
      } else if (i == n - 1) {
        g(r, c) = at(n - 1) - at(n - 2);
      } else {
        g(r, c) = 0.5 * (at(i + 1) - at(i - 1));
      }
    }
  return g;
}

// Bilinear lookup at a continuous (row, col); zero outside the grid.
double bilinear(const DepthArray& f, const Eigen::Vector2d& rc) {
  const double r = rc.x();
  const double c = rc.y();
  const int rows = static_cast<int>(f.rows());
  const int cols = static_cast<int>(f.cols());
  if (!(r >= 0.0 && c >= 0.0 && r <= rows - 1 && c <= cols - 1)) return 0.0;
  const int r0 = std::min(static_cast<int>(r), rows - 2);
  const int c0 = std::min(static_cast<int>(c), cols - 2);
  const double fr = r - r0;
  const double fc = c - c0;
  return (1 - fr) * ((1 - fc) * f(r0, c0) + fc * f(r0, c0 + 1)) +
         fr * ((1 - fc) * f(r0 + 1, c0) + fc * f(r0 + 1, c0 + 1));
}

}  // namespace

std::string to_string(ImageDomain domain) {
  switch (domain) {
    case ImageDomain::kSim:
      return "sim";
    case ImageDomain::kRealSynthetic:
      return "real_synthetic";
    case ImageDomain::kGenerated:
      return "generated";
  }
  return "unknown";
}

MarkerGrid MarkerGrid::hexagonal(int rings, double spacing, double blob_sigma) {
  if (rings < 0 || !(spacing > 0.0) || !(blob_sigma > 0.0))
    throw std::invalid_argument("hexagonal grid needs rings >= 0, positive spacing and sigma");
  MarkerGrid grid;
  grid.blob_sigma = blob_sigma;
  const double row_step = std::sqrt(3.0) / 2.0;
  for (int q = -rings; q <= rings; ++q) {
    const int r_lo = std::max(-rings, -q - rings);
    const int r_hi = std::min(rings, -q + rings);
    for (int r = r_lo; r <= r_hi; ++r)
      grid.positions.emplace_back(spacing * (q + 0.5 * r), spacing * row_step * r);
  }
  return grid;
}

void MarkerGrid::validate(const SensorGeometry& geom) const {
  if (!(blob_sigma > 0.0)) throw std::invalid_argument("blob_sigma must be positive");
  const double half = 0.5 * geom.sensing_aperture;
  for (const auto& p : positions)
    if (std::abs(p.x()) > half || std::abs(p.y()) > half)
      throw std::invalid_argument("marker outside the sensing aperture");
  for (size_t i = 0; i < positions.size(); ++i)
    for (size_t j = i + 1; j < positions.size(); ++j)
      if ((positions[i] - positions[j]).norm() <= 2.0 * blob_sigma)
        throw std::invalid_argument("markers closer than two blob sigmas");
}

void MembraneParams::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0 || kappa < 0.0)
    throw std::invalid_argument("membrane coefficients must be non-negative");
  if (!(contact_softness > 0.0)) throw std::invalid_argument("contact_softness must be positive");
}

TactileImage sim_tactile_image(const DepthImage& depth) {
  TactileImage img;
  img.domain = ImageDomain::kSim;
  img.values = (depth.values / depth.max_depth).cast<float>().min(1.0f).max(0.0f);
  return img;
}

DepthArray smooth_depth(const DepthImage& depth, double length_mm, const SensorGeometry& geom) {
  return convolve_separable(depth.values, gaussian_kernel(length_mm / geom.pixel_pitch()));
}

MarkerField marker_displacement_field(const DepthImage& depth, const ShearVector& shear,
                                      const MarkerGrid& grid, const MembraneParams& params,
                                      const SensorGeometry& geom) {
  params.validate();
  const size_t n = grid.positions.size();
  MarkerField field;
  field.positions = grid.positions;
  field.scales.assign(n, grid.blob_sigma);
  const double total = depth.values.sum();
  if (!(total > 0.0)) return field;

  const double pitch = geom.pixel_pitch();
  const DepthArray smooth = smooth_depth(depth, params.contact_softness, geom);
  // Rows run toward -y, so d/dy = -d/drow.
  const DepthArray grad_x = index_gradient(smooth, 1) / pitch;
  const DepthArray grad_y = -index_gradient(smooth, 0) / pitch;

  Eigen::Vector2d centroid = Eigen::Vector2d::Zero();
  for (int r = 0; r < depth.values.rows(); ++r)
    for (int c = 0; c < depth.values.cols(); ++c)
      centroid += depth.values(r, c) * geom.pixel_center(r, c);
  centroid /= total;

  const double yaw_rad = shear.yaw * M_PI / 180.0;
  const Eigen::Vector2d lateral(shear.x, shear.y);
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d& m = grid.positions[i];
    const Eigen::Vector2d rc = geom.plane_to_pixel(m);
    const double weight = std::clamp(bilinear(smooth, rc) / depth.max_depth, 0.0, 1.0);
    if (weight <= 0.0) continue;
    const Eigen::Vector2d grad(bilinear(grad_x, rc), bilinear(grad_y, rc));
    const Eigen::Vector2d rel = m - centroid;
    const Eigen::Vector2d perp(-rel.y(), rel.x());
    const Eigen::Vector2d u = params.alpha * grad + params.beta * weight * lateral +
                              params.gamma * weight * yaw_rad * perp;
    field.positions[i] = m + u;
    field.scales[i] = grid.blob_sigma * (1.0 + params.kappa * weight * shear.z);
  }
  return field;
}

TactileImage render_markers(const MarkerField& field, const SensorGeometry& geom) {
  if (field.positions.size() != field.scales.size())
    throw std::invalid_argument("marker positions and scales differ in length");
  const int n = geom.image_size;
  const double pitch = geom.pixel_pitch();
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> acc =
      Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(n, n);
  for (size_t i = 0; i < field.positions.size(); ++i) {
    const Eigen::Vector2d& p = field.positions[i];
    const double s = field.scales[i];
    if (!(s > 0.0)) continue;
    const Eigen::Vector2d rc = geom.plane_to_pixel(p);
    // Contributions beyond 6 sigma are below 1.6e-8 and dropped.
    const double reach = 6.0 * s / pitch;
    const int r0 = std::max(0, static_cast<int>(std::floor(rc.x() - reach)));
    const int r1 = std::min(n - 1, static_cast<int>(std::ceil(rc.x() + reach)));
    const int c0 = std::max(0, static_cast<int>(std::floor(rc.y() - reach)));
    const int c1 = std::min(n - 1, static_cast<int>(std::ceil(rc.y() + reach)));
    const double inv = 1.0 / (2.0 * s * s);
    for (int r = r0; r <= r1; ++r)
      for (int c = c0; c <= c1; ++c)
        acc(r, c) += std::exp(-(geom.pixel_center(r, c) - p).squaredNorm() * inv);
  }
  TactileImage img;
  img.domain = ImageDomain::kRealSynthetic;
  img.values = acc.min(1.0).max(0.0).cast<float>();
  return img;
}

TactileImage real_tactile_oracle(const DepthImage& depth, const ShearVector& shear,
                                 const MarkerGrid& grid, const MembraneParams& params,
                                 const SensorGeometry& geom) {
  return render_markers(marker_displacement_field(depth, shear, grid, params, geom), geom);
}

TactileImage resting_template(const MarkerGrid& grid, const SensorGeometry& geom) {
  MarkerField field{grid.positions, std::vector<double>(grid.positions.size(), grid.blob_sigma)};
  return render_markers(field, geom);
}

void add_uniform_noise(TactileImage& image, double amplitude, std::uint64_t seed) {
  if (amplitude <= 0.0) return;
  Rng rng(seed);
  for (Eigen::Index i = 0; i < image.values.size(); ++i) {
    const double v = image.values.data()[i] + rng.uniform(-amplitude, amplitude);
    image.values.data()[i] = static_cast<float>(std::clamp(v, 0.0, 1.0));
  }
}

}  // namespace simshear
