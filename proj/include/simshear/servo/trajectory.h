#pragma once

#include <string>

#include "simshear/contact_sim.h"
#include "simshear/json_io.h"

namespace simshear::servo {

enum class TrajectoryKind { kStatic, kCircle, kSquare, kSpiral, kLoop, kWave, kStar };

std::string to_string(TrajectoryKind kind);
TrajectoryKind trajectory_kind_from_string(const std::string& name);

/// Leader motion relative to its home pose. All shapes start at the home
/// pose and, except the spiral, close at t = duration.
struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::kCircle;
  double scale = 30.0;       // mm
  double duration = 60.0;    // s
  double sample_rate = 10.0; // Hz

  void validate() const;
  /// Control cycles in a run: round(duration * sample_rate).
  int steps() const;
};

Json to_json(const TrajectorySpec& spec);
TrajectorySpec trajectory_spec_from_json(const Json& j);

/// Closed-form leader pose at time t in [0, duration]:
///   circle  (s sin w, s (1 - cos w), 0), w = 2 pi t / T
///   square  rounded square of side 2s, z = 0.1 x
///   spiral  circle with z rising s / 3 over the run
///   loop    figure eight (s sin w, s/2 sin 2w) with yaw along the tangent
///   wave    circle with z = s/20 sin 4w
///   star    five-point star, outer radius s, inner 0.4 s, rounded tips
/// Throws std::out_of_range outside [0, duration].
Pose4 leader_trajectory(const TrajectorySpec& spec, double t);

}  // namespace simshear::servo
