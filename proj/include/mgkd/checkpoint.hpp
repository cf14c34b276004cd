#pragma once

// Single-file checkpoint archive. All integers and floats little-endian.
//
//   offset  size        field
//   0       8           magic "MGKDCKPT"
//   8       4  u32      format version (kCheckpointVersion)
//   12      8  u64      metadata length L
//   20      L           metadata, compact UTF-8 JSON (keys sorted)
//   ..      4  u32      tensor count T
//   per tensor, in ascending name order:
//           4  u32      name length, then name bytes
//           4  u32      rank R, then R x u64 dims
//           4*prod(dims) float32 values
//   end-8   8  u64      FNV-1a 64 of every preceding byte
//
// Tensor names are "<part>.<local name>", e.g. "backbone.0.weight",
// "classifier.bias", "ake.weight", "dk_adapter.bias".

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgkd/model.hpp"

namespace mgkd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Blob {
    std::vector<std::size_t> shape;
    std::vector<float> data;
    friend bool operator==(const Blob&, const Blob&) = default;
};

struct Checkpoint {
    std::map<std::string, Blob> tensors;
    nlohmann::json metadata = nlohmann::json::object();
};

/// `git describe` of the build, embedded in every checkpoint and report.
std::string code_version();

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin = "<memory>");

/// Writes via a temporary file and rename.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json to_json(const BackboneConfig& cfg);
BackboneConfig backbone_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GranularitySpec& spec);
GranularitySpec granularity_spec_from_json(const nlohmann::json& j);

/// `extra` is merged into the metadata (temperatures, seeds, ...).
Checkpoint to_checkpoint(const Network& net, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint to_checkpoint(const TeacherBundle& bundle, const nlohmann::json& extra = nlohmann::json::object());
Checkpoint to_checkpoint(const StudentBundle& bundle, const nlohmann::json& extra = nlohmann::json::object());

Network network_from_checkpoint(const Checkpoint& ckpt);
TeacherBundle teacher_from_checkpoint(const Checkpoint& ckpt);
StudentBundle student_from_checkpoint(const Checkpoint& ckpt);

} // namespace mgkd
