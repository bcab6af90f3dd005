#pragma once

#include <filesystem>
#include <stdexcept>
#include <vector>

#include "simshear/json_io.h"
#include "simshear/nn/layers.h"

namespace simshear::nn {

inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File layout: "SSCK", u32 version, u64 header length, JSON header
/// ({"meta": ..., "arrays": [{"name", "size"}...]}), then the float arrays
/// in header order, little-endian.
void save_checkpoint(const std::filesystem::path& path, const Json& meta,
                     const std::vector<StateEntry>& state);

/// Header metadata only.
Json read_checkpoint_meta(const std::filesystem::path& path);

/// Fills `state` (names and sizes must match exactly) and returns the meta.
Json load_checkpoint(const std::filesystem::path& path, const std::vector<StateEntry>& state);

}  // namespace simshear::nn
