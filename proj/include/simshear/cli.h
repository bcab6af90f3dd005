#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "simshear/json_io.h"

namespace simshear::cli {

/// Bad flags or config; dispatch maps it to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr int kRunConfigSchemaVersion = 1;
constexpr const char* kOutputRootEnv = "SIMSHEAR_OUTPUT_ROOT";

/// Reads and validates a run config file: schema_version, known sections.
Json load_run_config(const std::filesystem::path& path);

/// Output root from the environment, "runs" when unset.
std::filesystem::path output_root();

/// Runs one command. Exit codes: 0 success, 1 runtime failure (including
/// a failed servo task), 2 usage error.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace simshear::cli
