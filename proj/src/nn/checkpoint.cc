#include "simshear/nn/checkpoint.h"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace simshear::nn {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoints assume little-endian hosts");

constexpr char kMagic[4] = {'S', 'S', 'C', 'K'};

struct Header {
  Json meta;
  Json arrays;
  std::streamoff data_offset = 0;
};

Header read_header(std::ifstream& in, const std::filesystem::path& path) {
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t length = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError(path.string() + " is not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointError(path.string() + ": unsupported checkpoint version " +
                          std::to_string(version));
  if (length > (1u << 30)) throw CheckpointError(path.string() + ": corrupt header length");
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw CheckpointError(path.string() + ": truncated header");
  Header h;
  try {
    const Json j = Json::parse(text);
    h.meta = j.at("meta");
    h.arrays = j.at("arrays");
  } catch (const std::exception& e) {
    throw CheckpointError(path.string() + ": bad header: " + e.what());
  }
  h.data_offset = in.tellg();
  return h;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Json& meta,
                     const std::vector<StateEntry>& state) {
  Json arrays = Json::array();
  for (const auto& s : state) arrays.push_back(Json{{"name", s.name}, {"size", s.data->size()}});
  const std::string text = Json{{"meta", meta}, {"arrays", arrays}}.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  const std::uint32_t version = kCheckpointVersion;
  const std::uint64_t length = text.size();
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&length), sizeof length);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& s : state)
    out.write(reinterpret_cast<const char*>(s.data->data()),
              static_cast<std::streamsize>(sizeof(float) * s.data->size()));
  if (!out) throw CheckpointError("failed writing " + path.string());
}

Json read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_header(in, path).meta;
}

Json load_checkpoint(const std::filesystem::path& path, const std::vector<StateEntry>& state) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  const Header h = read_header(in, path);
  if (h.arrays.size() != state.size())
    throw CheckpointError(path.string() + ": holds " + std::to_string(h.arrays.size()) +
                          " arrays, model expects " + std::to_string(state.size()));
  for (size_t i = 0; i < state.size(); ++i) {
    const auto& a = h.arrays[i];
    const std::string name = a.at("name").get<std::string>();
    const size_t size = a.at("size").get<size_t>();
    if (name != state[i].name || size != state[i].data->size())
      throw CheckpointError(path.string() + ": array " + std::to_string(i) + " is '" + name +
                            "' (" + std::to_string(size) + "), model expects '" + state[i].name +
                            "' (" + std::to_string(state[i].data->size()) + ")");
    in.read(reinterpret_cast<char*>(state[i].data->data()),
            static_cast<std::streamsize>(sizeof(float) * size));
    if (!in) throw CheckpointError(path.string() + ": truncated data for '" + name + "'");
  }
  return h.meta;
}

}  // namespace simshear::nn
