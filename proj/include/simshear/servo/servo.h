#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Geometry>

#include "simshear/contact_sim.h"
#include "simshear/estimate/gdnn.h"
#include "simshear/json_io.h"
#include "simshear/sensor_models.h"
#include "simshear/servo/trajectory.h"

namespace simshear::servo {

using estimate::GaussianPrediction;

struct ServoGains {
  double k_shear_xy = 0.8;
  double k_shear_yaw = 0.5;
  double k_depth = 0.5;
  double depth_reference = 1.25;  // mm
  double step_limit = 2.0;        // mm per cycle

  /// Gains in [0, 2); zero is accepted so feedback paths can be ablated.
  void validate() const;
};

Json to_json(const ServoGains& g);
ServoGains servo_gains_from_json(const Json& j);

/// Sensor-frame correction for one cycle. Prediction components follow the
/// label order (pose_depth, pose_angle, shear_x, shear_y[, shear_z,
/// shear_yaw]); missing components count as zero.
Pose4 servo_step(const GaussianPrediction& prediction, const ServoGains& gains);

/// Arm pose after moving its sensor by `delta` (sensor frame). A 4-DoF arm
/// cannot roll, so a horizontal mount drops the yaw component.
Pose4 apply_servo_delta(const Pose4& arm, const Pose4& delta, SensorMount mount);

enum class TaskKind { kTracking, kColift };

std::string to_string(TaskKind kind);
TaskKind task_kind_from_string(const std::string& name);

/// World transform carrying the object for a leader pose. Co-lift
/// trajectories are drawn in the vertical plane facing the follower: the
/// trajectory's x, y, z map to world x, z, -y.
Eigen::Isometry3d leader_world(const Pose4& leader, TaskKind task);

struct TaskConfig {
  TaskKind task = TaskKind::kTracking;
  TrajectorySpec trajectory;
  ObjectShape object = ObjectShape::half_space({});
  /// Arm pose at first contact, before jitter.
  Pose4 follower_start;
  double gravity_shear_bias = 0.0;  // mm on the sensor's vertical axis, co-lift only
  ServoGains gains;
  SensorGeometry geom;
  MembraneParams membrane;
  int marker_rings = 10;
  double marker_spacing = 1.5;
  double blob_sigma = 0.45;
  /// Uniform start perturbation drawn from `seed`: +-mm in x/y, +-deg yaw.
  double start_jitter_mm = 0.5;
  double start_jitter_deg = 2.0;
  /// Sensor-frame displacement applied after the anchor is taken, so the
  /// run starts away from equilibrium.
  Pose4 initial_offset;
  double noise_amplitude = 0.0;
  bool fail_on_contact_loss = true;
  std::uint64_t seed = 1;
  std::string estimator;  // label recorded in the log

  SensorMount mount() const {
    return task == TaskKind::kColift ? SensorMount::kHorizontal : SensorMount::kVertical;
  }
  MarkerGrid marker_grid() const { return MarkerGrid::hexagonal(marker_rings, marker_spacing, blob_sigma); }
  void validate() const;

  /// Tracking: follower over the top edge of a block whose body lies on the
  /// +x side, so unopposed motion of the first quarter circle slides the
  /// block away. Co-lift: horizontal sensor on the face of a square prism.
  static TaskConfig defaults(TaskKind task, TrajectoryKind trajectory);
};

Json to_json(const TaskConfig& c);
TaskConfig task_config_from_json(const Json& j);

struct TrackingError {
  double mean = 0.0;
  double std = 0.0;
  std::vector<double> series;
};

Json to_json(const TrackingError& e);

/// Distance per step between follower positions and the leader-carried
/// target `leader[k] * contact_offset`. Population std.
TrackingError tracking_error(const std::vector<Eigen::Isometry3d>& leader,
                             const std::vector<Eigen::Vector3d>& follower,
                             const Eigen::Vector3d& contact_offset);

struct StepRecord {
  int step = 0;
  double t = 0.0;
  Pose4 leader;           // trajectory frame
  Pose4 follower_sensed;  // arm pose when the image was taken
  Pose4 follower;         // arm pose after the correction
  bool in_contact = false;
  ContactLabel truth;     // true contact, anchor depth and shear
  ShearVector sensed_shear;  // shear fed to the sensor model
  GaussianPrediction prediction;
  Pose4 delta;
  double error = 0.0;
};

struct TaskLog {
  Json header;
  std::vector<StepRecord> steps;
};

struct TaskResult {
  TrackingError error;
  TaskLog log;
  bool completed = false;
  int failure_step = -1;
  std::string failure_reason;
};

Json to_json(const StepRecord& r);
StepRecord step_record_from_json(const Json& j);

/// JSON lines: a header record, one record per cycle, then a summary.
void write_task_log(const std::filesystem::path& path, const TaskResult& result);
TaskResult read_task_log(const std::filesystem::path& path);

/// Recomputes the error series of a stored log.
TrackingError replay_tracking_error(const TaskLog& log);

/// Maps a tactile image (plus the label it encodes, for oracles) to a
/// prediction.
using Predictor = std::function<GaussianPrediction(const TactileImage& image, const ContactLabel& sensed)>;

/// Returns the sensed label itself, with a tiny variance.
Predictor oracle_predictor(int label_dim = 6);
/// Runs the network on the image; `estimator` must outlive the predictor.
Predictor gdnn_predictor(estimate::Estimator& estimator);

/// Closed loop: leader moves, sensor renders, estimator predicts, follower
/// corrects. Contact loss or over-penetration ends the run with a failure
/// step unless `fail_on_contact_loss` is off, in which case the anchor
/// resets on re-contact.
TaskResult run_task(const TaskConfig& config, const Predictor& predictor);
TaskResult run_tracking_task(const TaskConfig& config, const Predictor& predictor);
TaskResult run_colift_task(const TaskConfig& config, const Predictor& predictor);

}  // namespace simshear::servo
