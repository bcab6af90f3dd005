#include "simshear/json_io.h"

#include <fstream>
#include <stdexcept>

namespace simshear {

void to_json(Json& j, const Pose4& p) { j = Json{{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}}; }

void from_json(const Json& j, Pose4& p) {
  p = Pose4::make(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
                  j.at("yaw").get<double>());
}

void to_json(Json& j, const ShearVector& s) {
  j = Json{{"x", s.x}, {"y", s.y}, {"z", s.z}, {"yaw", s.yaw}};
}

void from_json(const Json& j, ShearVector& s) {
  s = {j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(),
       j.at("yaw").get<double>()};
}

void to_json(Json& j, const Interval& i) { j = Json::array({i.lo, i.hi}); }

void from_json(const Json& j, Interval& i) {
  if (!j.is_array() || j.size() != 2) throw std::invalid_argument("interval must be [lo, hi]");
  i = {j[0].get<double>(), j[1].get<double>()};
  if (i.lo > i.hi) throw std::invalid_argument("interval has lo > hi");
}

void to_json(Json& j, const ContactRanges& r) {
  j = Json{{"depth", r.depth},           {"shear_xy", r.shear_xy},
           {"shear_z", r.shear_z},       {"shear_yaw", r.shear_yaw},
           {"edge_angle", r.edge_angle}, {"edge_offset", r.edge_offset},
           {"lateral", r.lateral},       {"surface_yaw", r.surface_yaw}};
}

void from_json(const Json& j, ContactRanges& r) {
  ContactRanges d;
  d.depth = j.value("depth", d.depth);
  d.shear_xy = j.value("shear_xy", d.shear_xy);
  d.shear_z = j.value("shear_z", d.shear_z);
  d.shear_yaw = j.value("shear_yaw", d.shear_yaw);
  d.edge_angle = j.value("edge_angle", d.edge_angle);
  d.edge_offset = j.value("edge_offset", d.edge_offset);
  d.lateral = j.value("lateral", d.lateral);
  d.surface_yaw = j.value("surface_yaw", d.surface_yaw);
  r = d;
}

void to_json(Json& j, const SensorGeometry& g) {
  j = Json{{"tip_radius", g.tip_radius},
           {"image_size", g.image_size},
           {"sensing_aperture", g.sensing_aperture},
           {"max_depth", g.max_depth}};
}

void from_json(const Json& j, SensorGeometry& g) {
  SensorGeometry d;
  d.tip_radius = j.value("tip_radius", d.tip_radius);
  d.image_size = j.value("image_size", d.image_size);
  d.sensing_aperture = j.value("sensing_aperture", d.sensing_aperture);
  d.max_depth = j.value("max_depth", d.max_depth);
  d.validate();
  g = d;
}

void to_json(Json& j, const MembraneParams& m) {
  j = Json{{"alpha", m.alpha},
           {"beta", m.beta},
           {"gamma", m.gamma},
           {"kappa", m.kappa},
           {"contact_softness", m.contact_softness}};
}

void from_json(const Json& j, MembraneParams& m) {
  MembraneParams d;
  d.alpha = j.value("alpha", d.alpha);
  d.beta = j.value("beta", d.beta);
  d.gamma = j.value("gamma", d.gamma);
  d.kappa = j.value("kappa", d.kappa);
  d.contact_softness = j.value("contact_softness", d.contact_softness);
  d.validate();
  m = d;
}

void to_json(Json& j, const ContactLabel& l) {
  j = Json{{"pose_depth", l.pose_depth},
           {"pose_angle", l.pose_angle},
           {"shear_x", l.shear.x},
           {"shear_y", l.shear.y},
           {"shear_z", l.shear.z},
           {"shear_yaw", l.shear.yaw}};
}

void from_json(const Json& j, ContactLabel& l) {
  l.pose_depth = j.at("pose_depth").get<double>();
  l.pose_angle = j.at("pose_angle").get<double>();
  l.shear = {j.at("shear_x").get<double>(), j.at("shear_y").get<double>(),
             j.at("shear_z").get<double>(), j.at("shear_yaw").get<double>()};
}

Json shape_to_json(const ObjectShape& shape) {
  Json j{{"kind", to_string(shape.kind())}, {"pose", shape.pose()}};
  if (shape.kind() != ShapeKind::kHalfSpace) {
    const auto& d = shape.dimensions();
    j["dimensions"] = Json::array({d.x(), d.y(), d.z()});
  }
  return j;
}

ObjectShape shape_from_json(const Json& j) {
  const ShapeKind kind = shape_kind_from_string(j.at("kind").get<std::string>());
  const Pose4 pose = j.value("pose", Pose4{});
  if (kind == ShapeKind::kHalfSpace) return ObjectShape::half_space(pose);
  const auto& d = j.at("dimensions");
  if (!d.is_array() || d.size() != 3) throw std::invalid_argument("dimensions must have 3 entries");
  const Eigen::Vector3d dims(d[0].get<double>(), d[1].get<double>(), d[2].get<double>());
  return kind == ShapeKind::kBox ? ObjectShape::box(pose, dims) : ObjectShape::ellipsoid(pose, dims);
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

void merge_json(Json& base, const Json& patch) {
  if (!patch.is_object()) {
    base = patch;
    return;
  }
  if (!base.is_object()) base = Json::object();
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_json(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

}  // namespace simshear
