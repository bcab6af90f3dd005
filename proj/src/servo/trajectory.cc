#include "simshear/servo/trajectory.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace simshear::servo {
namespace {

constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kSquareSlope = 0.1;
constexpr double kStarInner = 0.4;
constexpr int kCornerSamples = 64;

double deg(double rad) { return rad * 180.0 / M_PI; }

// Closed polyline with each vertex replaced by a quadratic Bezier that
// starts and ends `cut` mm along the adjacent edges, traversed at constant
// speed. Position is relative to the start.
class RoundedPolygon {
 public:
  RoundedPolygon(const std::vector<Eigen::Vector2d>& vertices, double cut_fraction) {
    const size_t n = vertices.size();
    double min_edge = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < n; ++i)
      min_edge = std::min(min_edge, (vertices[(i + 1) % n] - vertices[i]).norm());
    const double cut = cut_fraction * min_edge;
    std::vector<Eigen::Vector2d> in(n), out(n);
    for (size_t i = 0; i < n; ++i) {
      const Eigen::Vector2d& v = vertices[i];
      in[i] = v + cut * (vertices[(i + n - 1) % n] - v).normalized();
      out[i] = v + cut * (vertices[(i + 1) % n] - v).normalized();
    }
    for (size_t i = 0; i < n; ++i) {
      const size_t j = (i + 1) % n;
      add_line(out[i], in[j]);
      add_corner(in[j], vertices[j], out[j]);
    }
    start_ = out[0];
  }

  double length() const { return cum_.back(); }

  Eigen::Vector2d at(double s) const {
    s = std::clamp(s, 0.0, length());
    size_t i = std::upper_bound(cum_.begin(), cum_.end(), s) - cum_.begin();
    if (i == 0) i = 1;
    if (i >= cum_.size()) i = cum_.size() - 1;
    const double span = cum_[i] - cum_[i - 1];
    const double f = span > 0.0 ? (s - cum_[i - 1]) / span : 0.0;
    return pts_[i - 1] + f * (pts_[i] - pts_[i - 1]) - start_;
  }

 private:
  void push(const Eigen::Vector2d& p) {
    if (pts_.empty()) {
      pts_.push_back(p);
      cum_.push_back(0.0);
      return;
    }
    cum_.push_back(cum_.back() + (p - pts_.back()).norm());
    pts_.push_back(p);
  }
  void add_line(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    push(a);
    push(b);
  }
  void add_corner(const Eigen::Vector2d& a, const Eigen::Vector2d& c, const Eigen::Vector2d& b) {
    for (int k = 1; k <= kCornerSamples; ++k) {
      const double u = static_cast<double>(k) / kCornerSamples;
      push((1 - u) * (1 - u) * a + 2 * (1 - u) * u * c + u * u * b);
    }
  }

  std::vector<Eigen::Vector2d> pts_;
  std::vector<double> cum_;
  Eigen::Vector2d start_;
};

const RoundedPolygon& unit_square() {
  static const RoundedPolygon shape({{1, -1}, {1, 1}, {-1, 1}, {-1, -1}}, 0.125);
  return shape;
}

const RoundedPolygon& unit_star() {
  static const RoundedPolygon shape = [] {
    std::vector<Eigen::Vector2d> v;
    for (int k = 0; k < 5; ++k) {
      const double a = M_PI / 2 + k * kTwoPi / 5;
      v.emplace_back(std::cos(a), std::sin(a));
      const double b = a + M_PI / 5;
      v.emplace_back(kStarInner * std::cos(b), kStarInner * std::sin(b));
    }
    return RoundedPolygon(v, 0.15);
  }();
  return shape;
}

double loop_heading(double w) { return std::atan2(std::cos(2 * w), std::cos(w)); }

}  // namespace

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::kStatic:
      return "static";
    case TrajectoryKind::kCircle:
      return "circle";
    case TrajectoryKind::kSquare:
      return "square";
    case TrajectoryKind::kSpiral:
      return "spiral";
    case TrajectoryKind::kLoop:
      return "loop";
    case TrajectoryKind::kWave:
      return "wave";
    case TrajectoryKind::kStar:
      return "star";
  }
  return "unknown";
}

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  for (auto k : {TrajectoryKind::kStatic, TrajectoryKind::kCircle, TrajectoryKind::kSquare,
                 TrajectoryKind::kSpiral, TrajectoryKind::kLoop, TrajectoryKind::kWave,
                 TrajectoryKind::kStar})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown trajectory '" + name +
                              "' (static, circle, square, spiral, loop, wave, star)");
}

void TrajectorySpec::validate() const {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw std::invalid_argument("trajectory scale must be > 0");
  if (!(duration > 0.0) || !std::isfinite(duration))
    throw std::invalid_argument("trajectory duration must be > 0");
  if (!(sample_rate > 0.0) || !std::isfinite(sample_rate))
    throw std::invalid_argument("sample_rate must be > 0");
  if (steps() < 1) throw std::invalid_argument("trajectory has no control cycles");
}

int TrajectorySpec::steps() const { return static_cast<int>(std::lround(duration * sample_rate)); }

Json to_json(const TrajectorySpec& spec) {
  return Json{{"name", to_string(spec.kind)},
              {"scale", spec.scale},
              {"duration", spec.duration},
              {"sample_rate", spec.sample_rate}};
}

TrajectorySpec trajectory_spec_from_json(const Json& j) {
  TrajectorySpec s;
  s.kind = trajectory_kind_from_string(j.value("name", to_string(s.kind)));
  s.scale = j.value("scale", s.scale);
  s.duration = j.value("duration", s.duration);
  s.sample_rate = j.value("sample_rate", s.sample_rate);
  s.validate();
  return s;
}

Pose4 leader_trajectory(const TrajectorySpec& spec, double t) {
  spec.validate();
  if (!(t >= 0.0 && t <= spec.duration))
    throw std::out_of_range("trajectory time " + std::to_string(t) + " outside [0, " +
                            std::to_string(spec.duration) + "]");
  const double s = spec.scale;
  const double u = t / spec.duration;
  const double w = kTwoPi * u;
  switch (spec.kind) {
    case TrajectoryKind::kStatic:
      return {};
    case TrajectoryKind::kCircle:
      return Pose4::make(s * std::sin(w), s * (1 - std::cos(w)), 0.0, 0.0);
    case TrajectoryKind::kSpiral:
      return Pose4::make(s * std::sin(w), s * (1 - std::cos(w)), s / 3 * u, 0.0);
    case TrajectoryKind::kWave:
      return Pose4::make(s * std::sin(w), s * (1 - std::cos(w)), s / 20 * std::sin(4 * w), 0.0);
    case TrajectoryKind::kLoop:
      return Pose4::make(s * std::sin(w), s / 2 * std::sin(2 * w), 0.0,
                         deg(loop_heading(w) - loop_heading(0.0)));
    case TrajectoryKind::kSquare: {
      const auto& path = unit_square();
      const Eigen::Vector2d p = s * path.at(u * path.length());
      return Pose4::make(p.x(), p.y(), kSquareSlope * p.x(), 0.0);
    }
    case TrajectoryKind::kStar: {
      const auto& path = unit_star();
      const Eigen::Vector2d p = s * path.at(u * path.length());
      return Pose4::make(p.x(), p.y(), 0.0, 0.0);
    }
  }
  return {};
}

}  // namespace simshear::servo
