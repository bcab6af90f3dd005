#pragma once

// nlohmann::json adapters for the value types that appear in manifests,
// configs and reports.

#include <filesystem>
#include <string>

#include "json.hpp"
#include "simshear/contact_sim.h"
#include "simshear/sensor_models.h"

namespace simshear {

using Json = nlohmann::ordered_json;

void to_json(Json& j, const Pose4& p);
void from_json(const Json& j, Pose4& p);
void to_json(Json& j, const ShearVector& s);
void from_json(const Json& j, ShearVector& s);
void to_json(Json& j, const Interval& i);
void from_json(const Json& j, Interval& i);
void to_json(Json& j, const ContactRanges& r);
void from_json(const Json& j, ContactRanges& r);
void to_json(Json& j, const SensorGeometry& g);
void from_json(const Json& j, SensorGeometry& g);
void to_json(Json& j, const MembraneParams& m);
void from_json(const Json& j, MembraneParams& m);
void to_json(Json& j, const ContactLabel& l);
void from_json(const Json& j, ContactLabel& l);

Json shape_to_json(const ObjectShape& shape);
ObjectShape shape_from_json(const Json& j);

Json read_json_file(const std::filesystem::path& path);
/// Writes with two-space indentation and a trailing newline.
void write_json_file(const std::filesystem::path& path, const Json& j);

/// Overlays keys of `patch` onto `base`, recursing into objects.
void merge_json(Json& base, const Json& patch);

}  // namespace simshear
