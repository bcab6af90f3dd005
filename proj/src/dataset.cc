#include "simshear/dataset.h"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <set>

#include "simshear/image_io.h"
#include "simshear/rng.h"

namespace simshear {
namespace fs = std::filesystem;

namespace {

std::string record_stem(const std::string& split, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return split + "/" + buf;
}

void check_split_name(const std::string& split) {
  if (split != "train" && split != "val" && split != "all")
    throw DatasetError("unknown split '" + split + "' (expected train, val or all)");
}

}  // namespace

std::string to_string(ContactType type) { return type == ContactType::kEdge ? "edge" : "surface"; }

ContactType contact_type_from_string(const std::string& name) {
  if (name == "edge") return ContactType::kEdge;
  if (name == "surface") return ContactType::kSurface;
  throw DatasetError("unknown contact type '" + name + "'");
}

ContactType contact_type_of(const ObjectShape& shape) {
  return shape.kind() == ShapeKind::kBox ? ContactType::kEdge : ContactType::kSurface;
}

Eigen::VectorXd label_vector(const ContactLabel& label, int label_dim) {
  if (label_dim != 4 && label_dim != 6) throw std::invalid_argument("label_dim must be 4 or 6");
  Eigen::VectorXd v(label_dim);
  v(0) = label.pose_depth;
  v(1) = label.pose_angle;
  v(2) = label.shear.x;
  v(3) = label.shear.y;
  if (label_dim == 6) {
    v(4) = label.shear.z;
    v(5) = label.shear.yaw;
  }
  return v;
}

std::vector<std::string> label_names(int label_dim) {
  std::vector<std::string> names{"pose_depth", "pose_angle", "shear_x", "shear_y"};
  if (label_dim == 6) {
    names.push_back("shear_z");
    names.push_back("shear_yaw");
  } else if (label_dim != 4) {
    throw std::invalid_argument("label_dim must be 4 or 6");
  }
  return names;
}

CollectionConfig CollectionConfig::preset_config(const std::string& name) {
  CollectionConfig c;
  c.preset = name;
  if (name == "desk" || name == "desk128") {
    c.train_count = 2000;
    c.val_count = 500;
    if (name == "desk128") c.geom.image_size = 128;
  } else if (name == "paper") {
    c.train_count = 5000;
    c.val_count = 2000;
  } else {
    throw std::invalid_argument("unknown dataset preset '" + name + "' (desk, desk128 or paper)");
  }
  // The block's top +x edge sits on the world origin.
  c.objects = {{"plane", ObjectShape::half_space(Pose4{})},
               {"block", ObjectShape::box(Pose4{-50.0, 0.0, -10.0, 0.0}, {50.0, 50.0, 10.0})}};
  return c;
}

MarkerGrid CollectionConfig::marker_grid() const {
  return MarkerGrid::hexagonal(marker_rings, marker_spacing, blob_sigma);
}

void CollectionConfig::validate() const {
  geom.validate();
  membrane.validate();
  marker_grid().validate(geom);
  if (train_count < 0 || val_count < 0) throw std::invalid_argument("negative sample count");
  if (label_dim != 4 && label_dim != 6) throw std::invalid_argument("label_dim must be 4 or 6");
  if (objects.empty()) throw std::invalid_argument("object set is empty");
  std::set<std::string> ids;
  for (const auto& o : objects)
    if (!ids.insert(o.id).second) throw std::invalid_argument("duplicate object id " + o.id);
  if (noise_amplitude < 0.0) throw std::invalid_argument("noise_amplitude must be >= 0");
}

Json config_to_json(const CollectionConfig& c) {
  Json objects = Json::array();
  for (const auto& o : c.objects) {
    Json j = shape_to_json(o.shape);
    j["id"] = o.id;
    objects.push_back(j);
  }
  return Json{{"preset", c.preset},
              {"train_count", c.train_count},
              {"val_count", c.val_count},
              {"seed", c.seed},
              {"label_dim", c.label_dim},
              {"sensor", c.geom},
              {"membrane", c.membrane},
              {"markers",
               {{"rings", c.marker_rings}, {"spacing", c.marker_spacing}, {"blob_sigma", c.blob_sigma}}},
              {"noise_amplitude", c.noise_amplitude},
              {"ranges", c.ranges},
              {"objects", objects}};
}

CollectionConfig config_from_json(const Json& j) {
  CollectionConfig c = CollectionConfig::preset_config(j.value("preset", std::string("desk")));
  c.train_count = j.value("train_count", c.train_count);
  c.val_count = j.value("val_count", c.val_count);
  c.seed = j.value("seed", c.seed);
  c.label_dim = j.value("label_dim", c.label_dim);
  if (j.contains("sensor")) c.geom = j.at("sensor").get<SensorGeometry>();
  if (j.contains("membrane")) c.membrane = j.at("membrane").get<MembraneParams>();
  if (j.contains("markers")) {
    const auto& m = j.at("markers");
    c.marker_rings = m.value("rings", c.marker_rings);
    c.marker_spacing = m.value("spacing", c.marker_spacing);
    c.blob_sigma = m.value("blob_sigma", c.blob_sigma);
  }
  c.noise_amplitude = j.value("noise_amplitude", c.noise_amplitude);
  if (j.contains("ranges")) c.ranges = j.at("ranges").get<ContactRanges>();
  if (j.contains("objects")) {
    c.objects.clear();
    for (const auto& o : j.at("objects"))
      c.objects.push_back({o.at("id").get<std::string>(), shape_from_json(o)});
  }
  c.validate();
  return c;
}

int DatasetManifest::count(const std::string& split) const {
  int n = 0;
  for (const auto& r : records) n += (split == "all" || r.split == split) ? 1 : 0;
  return n;
}

const ObjectSpec& DatasetManifest::object(const std::string& id) const {
  for (const auto& o : config.objects)
    if (o.id == id) return o;
  throw DatasetError("manifest has no object '" + id + "'");
}

Json manifest_to_json(const DatasetManifest& m) {
  Json records = Json::array();
  for (const auto& r : m.records) {
    records.push_back(Json{{"index", r.index},
                           {"split", r.split},
                           {"object_id", r.object_id},
                           {"contact_type", to_string(r.contact_type)},
                           {"sim_path", r.sim_path},
                           {"real_path", r.real_path},
                           {"sim_checksum", r.sim_checksum},
                           {"real_checksum", r.real_checksum},
                           {"anchor", r.anchor},
                           {"sheared", r.sheared},
                           {"shear", r.shear},
                           {"label", r.label}});
  }
  return Json{{"schema_version", m.schema_version},
              {"counts", {{"train", m.count("train")}, {"val", m.count("val")}}},
              {"config", config_to_json(m.config)},
              {"records", records}};
}

DatasetManifest manifest_from_json(const Json& j, const fs::path& root) {
  DatasetManifest m;
  m.root = root;
  m.schema_version = j.at("schema_version").get<int>();
  if (m.schema_version != kManifestSchemaVersion)
    throw DatasetError("unsupported manifest schema version " + std::to_string(m.schema_version));
  m.config = config_from_json(j.at("config"));
  int i = 0;
  for (const auto& r : j.at("records")) {
    SampleRecord rec;
    try {
      rec.index = r.at("index").get<int>();
      rec.split = r.at("split").get<std::string>();
      rec.object_id = r.at("object_id").get<std::string>();
      rec.contact_type = contact_type_from_string(r.at("contact_type").get<std::string>());
      rec.sim_path = r.at("sim_path").get<std::string>();
      rec.real_path = r.at("real_path").get<std::string>();
      rec.sim_checksum = r.at("sim_checksum").get<std::uint64_t>();
      rec.real_checksum = r.at("real_checksum").get<std::uint64_t>();
      rec.anchor = r.at("anchor").get<Pose4>();
      rec.sheared = r.at("sheared").get<Pose4>();
      rec.shear = r.at("shear").get<ShearVector>();
      rec.label = r.at("label").get<ContactLabel>();
    } catch (const std::exception& e) {
      throw DatasetError("record " + std::to_string(i) + ": " + e.what());
    }
    m.records.push_back(rec);
    ++i;
  }
  const auto& counts = j.at("counts");
  if (counts.at("train").get<int>() != m.count("train") ||
      counts.at("val").get<int>() != m.count("val"))
    throw DatasetError("manifest counts do not match the record list");
  return m;
}

DatasetManifest read_manifest(const fs::path& manifest_path) {
  DatasetManifest m = manifest_from_json(read_json_file(manifest_path), manifest_path.parent_path());
  for (size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    for (const auto& p : {r.sim_path, r.real_path})
      if (!fs::exists(m.root / p))
        throw DatasetError("record " + std::to_string(i) + " (" + r.split + " #" +
                           std::to_string(r.index) + "): missing file " + p);
  }
  return m;
}

std::uint64_t sample_seed(std::uint64_t seed, const std::string& split, int index) {
  const std::uint64_t stream = split == "train" ? 0 : 1;
  return substream_seed(substream_seed(seed, stream), static_cast<std::uint64_t>(index));
}

SampleTuple make_sample(const CollectionConfig& config, const ObjectSpec& object,
                        std::uint64_t seed) {
  const ContactSample cs = sample_contact(object.shape, config.ranges, config.geom, seed);
  const DepthImage depth = render_depth(cs.sheared, object.shape, config.geom);
  SampleTuple t;
  t.sim_image = sim_tactile_image(depth);
  t.real_image =
      real_tactile_oracle(depth, cs.label.shear, config.marker_grid(), config.membrane, config.geom);
  add_uniform_noise(t.real_image, config.noise_amplitude, substream_seed(seed, 99));
  t.shear = cs.label.shear;
  t.label = cs.label;
  t.contact_type = contact_type_of(object.shape);
  t.object_id = object.id;
  t.anchor = cs.anchor;
  t.sheared = cs.sheared;
  return t;
}

std::uint64_t file_checksum(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[4096];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

DatasetManifest collect_dataset(const CollectionConfig& config, const fs::path& out_dir) {
  config.validate();
  DatasetManifest m;
  m.config = config;
  m.root = out_dir;
  fs::create_directories(out_dir / "train");
  fs::create_directories(out_dir / "val");
  for (const std::string split : {"train", "val"}) {
    const int n = split == "train" ? config.train_count : config.val_count;
    for (int i = 0; i < n; ++i) {
      const ObjectSpec& object = config.objects[i % config.objects.size()];
      SampleTuple t;
      try {
        t = make_sample(config, object, sample_seed(config.seed, split, i));
      } catch (const ContactSamplingError& e) {
        throw DatasetError(split + " sample " + std::to_string(i) + " on '" + object.id +
                           "': " + e.what());
      }
      SampleRecord r;
      r.index = i;
      r.split = split;
      r.object_id = object.id;
      r.contact_type = t.contact_type;
      const std::string stem = record_stem(split, i);
      r.sim_path = stem + "_sim.png";
      r.real_path = stem + "_real.png";
      write_png_gray(out_dir / r.sim_path, t.sim_image.values);
      write_png_gray(out_dir / r.real_path, t.real_image.values);
      r.sim_checksum = file_checksum(out_dir / r.sim_path);
      r.real_checksum = file_checksum(out_dir / r.real_path);
      r.anchor = t.anchor;
      r.sheared = t.sheared;
      r.shear = t.shear;
      r.label = t.label;
      m.records.push_back(r);
    }
  }
  write_json_file(out_dir / "manifest.json", manifest_to_json(m));
  return m;
}

std::vector<SampleTuple> load_dataset(const fs::path& manifest_path, const std::string& split) {
  return load_dataset(read_manifest(manifest_path), split);
}

std::vector<SampleTuple> load_dataset(const DatasetManifest& m, const std::string& split) {
  check_split_name(split);
  const int size = m.config.geom.image_size;
  std::vector<SampleTuple> out;
  for (size_t i = 0; i < m.records.size(); ++i) {
    const auto& r = m.records[i];
    if (split != "all" && r.split != split) continue;
    const std::string where =
        "record " + std::to_string(i) + " (" + r.split + " #" + std::to_string(r.index) + ")";
    SampleTuple t;
    auto load = [&](const std::string& rel, std::uint64_t checksum, ImageDomain domain) {
      const fs::path p = m.root / rel;
      if (!fs::exists(p)) throw DatasetError(where + ": missing file " + rel);
      if (file_checksum(p) != checksum) throw DatasetError(where + ": checksum mismatch for " + rel);
      TactileImage img;
      try {
        img.values = read_png_gray(p);
      } catch (const std::exception& e) {
        throw DatasetError(where + ": " + e.what());
      }
      if (img.rows() != size || img.cols() != size)
        throw DatasetError(where + ": image " + rel + " is not " + std::to_string(size) + "x" +
                           std::to_string(size));
      img.domain = domain;
      return img;
    };
    t.sim_image = load(r.sim_path, r.sim_checksum, ImageDomain::kSim);
    t.real_image = load(r.real_path, r.real_checksum, ImageDomain::kRealSynthetic);
    if (!(r.label.shear == r.shear)) throw DatasetError(where + ": label shear differs from shear");
    if (r.label.pose_depth < 0.0) throw DatasetError(where + ": negative pose_depth");
    t.shear = r.shear;
    t.label = r.label;
    t.contact_type = r.contact_type;
    t.object_id = r.object_id;
    t.anchor = r.anchor;
    t.sheared = r.sheared;
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace simshear
