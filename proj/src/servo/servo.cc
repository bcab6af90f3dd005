#include "simshear/servo/servo.h"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "simshear/rng.h"

namespace simshear::servo {
namespace {

double clamp_step(double v, double limit) { return std::clamp(v, -limit, limit); }

double component(const GaussianPrediction& p, int i) {
  return i < p.mean.size() ? p.mean[i] : 0.0;
}

Eigen::Matrix3d colift_plane() {
  return Eigen::AngleAxisd(M_PI / 2.0, Eigen::Vector3d::UnitX()).toRotationMatrix();
}

std::vector<double> as_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Nominal indentation of a sensor whose tip center sits at `center`.
double nominal_depth(const ObjectShape& object, const Eigen::Vector3d& center, double tip_radius) {
  return std::max(0.0, tip_radius - sdf_eval(object, center));
}

// Feature orientation seen by a vertical sensor; zero for surfaces.
double feature_angle(const ObjectShape& object, const Eigen::Isometry3d& sensor_in_object,
                     SensorMount mount) {
  if (object.kind() != ShapeKind::kBox || mount != SensorMount::kVertical) return 0.0;
  const Eigen::Isometry3d rel = object.feature_frame().isometry().inverse() * sensor_in_object;
  return -wrap_degrees(std::atan2(rel.linear()(1, 0), rel.linear()(0, 0)) * 180.0 / M_PI);
}

}  // namespace

void ServoGains::validate() const {
  for (double k : {k_shear_xy, k_shear_yaw, k_depth})
    if (!(k >= 0.0 && k < 2.0)) throw std::invalid_argument("servo gains must lie in [0, 2)");
  if (!(step_limit > 0.0)) throw std::invalid_argument("step_limit must be > 0");
  if (!(depth_reference > 0.0)) throw std::invalid_argument("depth_reference must be > 0");
}

Json to_json(const ServoGains& g) {
  return Json{{"k_shear_xy", g.k_shear_xy}, {"k_shear_yaw", g.k_shear_yaw}, {"k_depth", g.k_depth},
              {"depth_reference", g.depth_reference}, {"step_limit", g.step_limit}};
}

ServoGains servo_gains_from_json(const Json& j) {
  ServoGains g;
  g.k_shear_xy = j.value("k_shear_xy", g.k_shear_xy);
  g.k_shear_yaw = j.value("k_shear_yaw", g.k_shear_yaw);
  g.k_depth = j.value("k_depth", g.k_depth);
  g.depth_reference = j.value("depth_reference", g.depth_reference);
  g.step_limit = j.value("step_limit", g.step_limit);
  g.validate();
  return g;
}

Pose4 servo_step(const GaussianPrediction& p, const ServoGains& g) {
  const double depth = component(p, 0);
  const double sx = component(p, 2), sy = component(p, 3);
  const double sz = component(p, 4), syaw = component(p, 5);
  return Pose4::make(clamp_step(g.k_shear_xy * sx, g.step_limit),
                     clamp_step(g.k_shear_xy * sy, g.step_limit),
                     clamp_step(g.k_depth * (depth - g.depth_reference) + g.k_shear_xy * sz, g.step_limit),
                     g.k_shear_yaw * syaw);
}

Pose4 apply_servo_delta(const Pose4& arm, const Pose4& delta, SensorMount mount) {
  if (mount == SensorMount::kVertical) return compose(arm, delta);
  // Sensor x, y, z are the flange's x, -z, y.
  return compose(arm, Pose4::make(delta.x, delta.z, -delta.y, 0.0));
}

std::string to_string(TaskKind kind) { return kind == TaskKind::kColift ? "colift" : "tracking"; }

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "tracking") return TaskKind::kTracking;
  if (name == "colift") return TaskKind::kColift;
  throw std::invalid_argument("unknown task '" + name + "' (tracking or colift)");
}

Eigen::Isometry3d leader_world(const Pose4& leader, TaskKind task) {
  const Eigen::Isometry3d l = leader.isometry();
  if (task == TaskKind::kTracking) return l;
  Eigen::Isometry3d m = Eigen::Isometry3d::Identity();
  m.linear() = colift_plane();
  return m * l * m.inverse();
}

void TaskConfig::validate() const {
  trajectory.validate();
  gains.validate();
  geom.validate();
  membrane.validate();
  if (task == TaskKind::kTracking && gravity_shear_bias != 0.0)
    throw std::invalid_argument("gravity_shear_bias applies to co-lift only");
  if (!std::isfinite(gravity_shear_bias)) throw std::invalid_argument("gravity_shear_bias must be finite");
  if (!(start_jitter_mm >= 0.0) || !(start_jitter_deg >= 0.0))
    throw std::invalid_argument("start jitter must be >= 0");
  if (!(noise_amplitude >= 0.0)) throw std::invalid_argument("noise_amplitude must be >= 0");
}

TaskConfig TaskConfig::defaults(TaskKind task, TrajectoryKind trajectory) {
  TaskConfig c;
  c.task = task;
  c.trajectory.kind = trajectory;
  const double standoff = c.geom.tip_radius - c.gains.depth_reference;
  if (task == TaskKind::kTracking) {
    c.object = ObjectShape::box(Pose4::make(50.0, 0.0, -10.0, 180.0), {50.0, 50.0, 10.0});
    c.follower_start = compose(c.object.feature_frame(), Pose4{-2.0, 0.0, standoff, 0.0});
  } else {
    c.object = ObjectShape::box(Pose4::make(0.0, -20.0, 0.0, 0.0), {20.0, 20.0, 60.0});
    c.follower_start = Pose4::make(0.0, standoff, 0.0, 0.0);
    c.gravity_shear_bias = 0.5;
  }
  return c;
}

Json to_json(const TaskConfig& c) {
  return Json{{"task", to_string(c.task)},
              {"trajectory", to_json(c.trajectory)},
              {"object", shape_to_json(c.object)},
              {"follower_start", c.follower_start},
              {"gravity_shear_bias", c.gravity_shear_bias},
              {"gains", to_json(c.gains)},
              {"geometry", c.geom},
              {"membrane", c.membrane},
              {"marker_rings", c.marker_rings},
              {"marker_spacing", c.marker_spacing},
              {"blob_sigma", c.blob_sigma},
              {"start_jitter_mm", c.start_jitter_mm},
              {"start_jitter_deg", c.start_jitter_deg},
              {"initial_offset", c.initial_offset},
              {"noise_amplitude", c.noise_amplitude},
              {"fail_on_contact_loss", c.fail_on_contact_loss},
              {"seed", c.seed},
              {"estimator", c.estimator}};
}

TaskConfig task_config_from_json(const Json& j) {
  const TaskKind task = task_kind_from_string(j.value("task", std::string("tracking")));
  TrajectorySpec spec;
  if (j.contains("trajectory")) spec = trajectory_spec_from_json(j.at("trajectory"));
  TaskConfig c = TaskConfig::defaults(task, spec.kind);
  c.trajectory = spec;
  if (j.contains("object")) c.object = shape_from_json(j.at("object"));
  if (j.contains("follower_start")) c.follower_start = j.at("follower_start").get<Pose4>();
  c.gravity_shear_bias = j.value("gravity_shear_bias", c.gravity_shear_bias);
  if (j.contains("gains")) c.gains = servo_gains_from_json(j.at("gains"));
  if (j.contains("geometry")) c.geom = j.at("geometry").get<SensorGeometry>();
  if (j.contains("membrane")) c.membrane = j.at("membrane").get<MembraneParams>();
  c.marker_rings = j.value("marker_rings", c.marker_rings);
  c.marker_spacing = j.value("marker_spacing", c.marker_spacing);
  c.blob_sigma = j.value("blob_sigma", c.blob_sigma);
  c.start_jitter_mm = j.value("start_jitter_mm", c.start_jitter_mm);
  c.start_jitter_deg = j.value("start_jitter_deg", c.start_jitter_deg);
  if (j.contains("initial_offset")) c.initial_offset = j.at("initial_offset").get<Pose4>();
  c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
  c.fail_on_contact_loss = j.value("fail_on_contact_loss", c.fail_on_contact_loss);
  c.seed = j.value("seed", c.seed);
  c.estimator = j.value("estimator", c.estimator);
  c.validate();
  return c;
}

Json to_json(const TrackingError& e) {
  return Json{{"mean", e.mean}, {"std", e.std}, {"steps", e.series.size()}};
}

TrackingError tracking_error(const std::vector<Eigen::Isometry3d>& leader,
                             const std::vector<Eigen::Vector3d>& follower,
                             const Eigen::Vector3d& contact_offset) {
  if (leader.size() != follower.size())
    throw std::invalid_argument("leader and follower logs differ in length (" +
                                std::to_string(leader.size()) + " vs " +
                                std::to_string(follower.size()) + ")");
  TrackingError e;
  for (size_t k = 0; k < leader.size(); ++k)
    e.series.push_back((follower[k] - leader[k] * contact_offset).norm());
  if (e.series.empty()) return e;
  for (double d : e.series) e.mean += d;
  e.mean /= static_cast<double>(e.series.size());
  for (double d : e.series) e.std += (d - e.mean) * (d - e.mean);
  e.std = std::sqrt(e.std / static_cast<double>(e.series.size()));
  return e;
}

Json to_json(const StepRecord& r) {
  return Json{{"type", "step"},
              {"step", r.step},
              {"t", r.t},
              {"leader", r.leader},
              {"follower_sensed", r.follower_sensed},
              {"follower", r.follower},
              {"in_contact", r.in_contact},
              {"truth", r.truth},
              {"sensed_shear", r.sensed_shear},
              {"prediction_mean", as_std(r.prediction.mean)},
              {"prediction_variance", as_std(r.prediction.variance)},
              {"delta", r.delta},
              {"error", r.error}};
}

StepRecord step_record_from_json(const Json& j) {
  StepRecord r;
  r.step = j.at("step").get<int>();
  r.t = j.at("t").get<double>();
  r.leader = j.at("leader").get<Pose4>();
  r.follower_sensed = j.at("follower_sensed").get<Pose4>();
  r.follower = j.at("follower").get<Pose4>();
  r.in_contact = j.at("in_contact").get<bool>();
  r.truth = j.at("truth").get<ContactLabel>();
  r.sensed_shear = j.at("sensed_shear").get<ShearVector>();
  r.prediction.mean = as_eigen(j.at("prediction_mean").get<std::vector<double>>());
  r.prediction.variance = as_eigen(j.at("prediction_variance").get<std::vector<double>>());
  r.delta = j.at("delta").get<Pose4>();
  r.error = j.at("error").get<double>();
  return r;
}

void write_task_log(const std::filesystem::path& path, const TaskResult& result) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  Json header = result.log.header;
  header["type"] = "header";
  out << header.dump() << '\n';
  for (const auto& s : result.log.steps) out << to_json(s).dump() << '\n';
  const Json summary{{"type", "summary"},
                     {"completed", result.completed},
                     {"failure_step", result.failure_step},
                     {"failure_reason", result.failure_reason},
                     {"error", to_json(result.error)}};
  out << summary.dump() << '\n';
}

TaskResult read_task_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  TaskResult r;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    const std::string type = j.value("type", std::string());
    if (type == "header") {
      r.log.header = j;
      r.log.header.erase("type");
    } else if (type == "step") {
      r.log.steps.push_back(step_record_from_json(j));
    } else if (type == "summary") {
      r.completed = j.at("completed").get<bool>();
      r.failure_step = j.at("failure_step").get<int>();
      r.failure_reason = j.at("failure_reason").get<std::string>();
    } else {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": unknown record type");
    }
  }
  if (r.log.header.is_null()) throw std::runtime_error(path.string() + " has no header record");
  r.error = replay_tracking_error(r.log);
  return r;
}

TrackingError replay_tracking_error(const TaskLog& log) {
  const TaskKind task = task_kind_from_string(log.header.at("config").at("task").get<std::string>());
  const auto off = log.header.at("contact_offset").get<std::vector<double>>();
  std::vector<Eigen::Isometry3d> leader;
  std::vector<Eigen::Vector3d> follower;
  for (const auto& s : log.steps) {
    leader.push_back(leader_world(s.leader, task));
    follower.push_back(s.follower.position());
  }
  return tracking_error(leader, follower, Eigen::Vector3d(off.at(0), off.at(1), off.at(2)));
}

Predictor oracle_predictor(int label_dim) {
  return [label_dim](const TactileImage&, const ContactLabel& sensed) {
    GaussianPrediction p;
    p.mean = label_vector(sensed, label_dim);
    p.variance = Eigen::VectorXd::Constant(label_dim, 1e-6);
    return p;
  };
}

Predictor gdnn_predictor(estimate::Estimator& estimator) {
  return [&estimator](const TactileImage& image, const ContactLabel&) { return estimator.predict(image.values); };
}

TaskResult run_task(const TaskConfig& config, const Predictor& predictor) {
  config.validate();
  const TrajectorySpec& spec = config.trajectory;
  const SensorMount mount = config.mount();
  const MarkerGrid grid = config.marker_grid();
  const double tip = config.geom.tip_radius;

  TaskResult result;
  auto fail = [&](int step, const std::string& why) {
    result.failure_step = step;
    result.failure_reason = why;
  };

  Rng jitter(substream_seed(config.seed, 0));
  const double jx = jitter.uniform(-config.start_jitter_mm, config.start_jitter_mm);
  const double jy = jitter.uniform(-config.start_jitter_mm, config.start_jitter_mm);
  const double jyaw = jitter.uniform(-config.start_jitter_deg, config.start_jitter_deg);
  Pose4 arm = apply_servo_delta(config.follower_start, Pose4::make(jx, jy, 0.0, jyaw), mount);

  // First contact at the home pose fixes the anchor and the tracked target.
  const Eigen::Isometry3d home = leader_world(leader_trajectory(spec, 0.0), config.task);
  Eigen::Isometry3d anchor = home.inverse() * sensor_frame(arm, mount);
  const Eigen::Vector3d contact_offset = anchor.translation();
  double anchor_depth = nominal_depth(config.object, anchor.translation(), tip);
  double anchor_angle = feature_angle(config.object, anchor, mount);
  bool anchored = true;

  Json header{{"config", to_json(config)},
              {"mount", mount == SensorMount::kHorizontal ? "horizontal" : "vertical"},
              {"follower_anchor", arm},
              {"contact_offset", {contact_offset.x(), contact_offset.y(), contact_offset.z()}},
              {"anchor_depth", anchor_depth}};
  result.log.header = header;
  arm = apply_servo_delta(arm, config.initial_offset, mount);

  std::vector<Eigen::Isometry3d> leader_log;
  std::vector<Eigen::Vector3d> follower_log;
  const int n = spec.steps();
  for (int k = 0; k < n; ++k) {
    StepRecord rec;
    rec.step = k;
    rec.t = std::min(k / spec.sample_rate, spec.duration);
    rec.leader = leader_trajectory(spec, rec.t);
    const Eigen::Isometry3d world = leader_world(rec.leader, config.task);
    const Eigen::Isometry3d sensor = world.inverse() * sensor_frame(arm, mount);
    rec.follower_sensed = arm;

    DepthImage depth;
    try {
      depth = render_depth(sensor, config.object, config.geom);
    } catch (const OverPenetrationError& e) {
      fail(k, std::string("over-penetration: ") + e.what());
      break;
    }
    rec.in_contact = depth.in_contact();
    if (!rec.in_contact) {
      if (config.fail_on_contact_loss) {
        fail(k, "contact lost");
        break;
      }
      anchored = false;
      rec.follower = arm;
    } else {
      if (!anchored) {
        anchor = sensor;
        anchor_depth = nominal_depth(config.object, sensor.translation(), tip);
        anchor_angle = feature_angle(config.object, sensor, mount);
        anchored = true;
      }
      rec.truth = {anchor_depth, anchor_angle, contact_shear(anchor, sensor)};
      rec.sensed_shear = rec.truth.shear;
      rec.sensed_shear.y += config.gravity_shear_bias;
      TactileImage image =
          real_tactile_oracle(depth, rec.sensed_shear, grid, config.membrane, config.geom);
      add_uniform_noise(image, config.noise_amplitude, substream_seed(config.seed, 1 + k));
      ContactLabel sensed = rec.truth;
      sensed.shear = rec.sensed_shear;
      rec.prediction = predictor(image, sensed);
      if (!rec.prediction.mean.allFinite()) {
        fail(k, "non-finite prediction");
        break;
      }
      rec.delta = servo_step(rec.prediction, config.gains);
      rec.follower = apply_servo_delta(arm, rec.delta, mount);
    }
    arm = rec.follower;
    leader_log.push_back(world);
    follower_log.push_back(arm.position());
    result.log.steps.push_back(std::move(rec));
  }
  result.error = tracking_error(leader_log, follower_log, contact_offset);
  for (size_t k = 0; k < result.log.steps.size(); ++k) result.log.steps[k].error = result.error.series[k];
  result.completed = result.failure_step < 0;
  return result;
}

TaskResult run_tracking_task(const TaskConfig& config, const Predictor& predictor) {
  if (config.task != TaskKind::kTracking) throw std::invalid_argument("run_tracking_task needs a tracking config");
  return run_task(config, predictor);
}

TaskResult run_colift_task(const TaskConfig& config, const Predictor& predictor) {
  if (config.task != TaskKind::kColift) throw std::invalid_argument("run_colift_task needs a colift config");
  return run_task(config, predictor);
}

}  // namespace simshear::servo
