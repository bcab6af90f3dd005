#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "simshear/contact_sim.h"
#include "simshear/json_io.h"
#include "simshear/sensor_models.h"

namespace simshear {

inline constexpr int kManifestSchemaVersion = 1;

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ContactType { kEdge, kSurface };

std::string to_string(ContactType type);
ContactType contact_type_from_string(const std::string& name);

/// Contacts on a box are edge contacts; everything else is a surface.
ContactType contact_type_of(const ObjectShape& shape);

struct ObjectSpec {
  std::string id;
  ObjectShape shape;
};

/// (pose_depth, pose_angle, shear_x, shear_y[, shear_z, shear_yaw]).
Eigen::VectorXd label_vector(const ContactLabel& label, int label_dim);
std::vector<std::string> label_names(int label_dim);

struct CollectionConfig {
  std::string preset = "desk";
  int train_count = 2000;
  int val_count = 500;
  std::uint64_t seed = 7;
  int label_dim = 4;
  SensorGeometry geom;
  MembraneParams membrane;
  int marker_rings = 10;
  double marker_spacing = 1.5;
  double blob_sigma = 0.45;
  double noise_amplitude = 0.0;
  ContactRanges ranges;
  std::vector<ObjectSpec> objects;

  /// "desk" (2000/500), "desk128" (same counts at 128x128) or "paper"
  /// (5000/2000).
  static CollectionConfig preset_config(const std::string& name);
  MarkerGrid marker_grid() const;
  void validate() const;
};

Json config_to_json(const CollectionConfig& config);
CollectionConfig config_from_json(const Json& j);

struct SampleRecord {
  int index = 0;  // position within its split
  std::string split;
  std::string object_id;
  ContactType contact_type = ContactType::kSurface;
  std::string sim_path;  // relative to the manifest directory
  std::string real_path;
  std::uint64_t sim_checksum = 0;
  std::uint64_t real_checksum = 0;
  Pose4 anchor;
  Pose4 sheared;
  ShearVector shear;
  ContactLabel label;
};

struct DatasetManifest {
  int schema_version = kManifestSchemaVersion;
  CollectionConfig config;
  std::vector<SampleRecord> records;
  std::filesystem::path root;  // directory holding manifest.json

  int count(const std::string& split) const;
  const ObjectSpec& object(const std::string& id) const;
};

Json manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(const Json& j, const std::filesystem::path& root);

/// Reads and structurally validates manifest.json (counts, file presence).
DatasetManifest read_manifest(const std::filesystem::path& manifest_path);

struct SampleTuple {
  TactileImage sim_image;
  TactileImage real_image;
  ShearVector shear;
  ContactLabel label;
  ContactType contact_type = ContactType::kSurface;
  std::string object_id;
  Pose4 anchor;
  Pose4 sheared;
};

/// The in-memory tuple for one record, before persistence.
SampleTuple make_sample(const CollectionConfig& config, const ObjectSpec& object,
                        std::uint64_t sample_seed);

/// Seed of sample `index` of `split`; train and val use disjoint substreams.
std::uint64_t sample_seed(std::uint64_t seed, const std::string& split, int index);

/// Renders every tuple, writes PNGs under `out_dir` and returns the
/// manifest (also written to out_dir/manifest.json).
DatasetManifest collect_dataset(const CollectionConfig& config,
                                const std::filesystem::path& out_dir);

/// Tuples of `split` ("train", "val" or "all") in manifest order.
std::vector<SampleTuple> load_dataset(const std::filesystem::path& manifest_path,
                                      const std::string& split);
std::vector<SampleTuple> load_dataset(const DatasetManifest& manifest, const std::string& split);

/// FNV-1a of a file's bytes.
std::uint64_t file_checksum(const std::filesystem::path& path);

}  // namespace simshear
