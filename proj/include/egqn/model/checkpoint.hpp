#pragma once

#include <json.hpp>

#include <string>

#include "egqn/model/config.hpp"
#include "egqn/model/params.hpp"

namespace egqn::model {

// Layout (little-endian):
//   "EGQNCKPT"  u32 version  u32 json_len  json{config, metadata}
//   u32 count, then per array: u16 name_len, name, u8 rank, u32 dims[rank],
//   f32 values
//   u32 crc32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  nlohmann::json metadata;
  ParamStore<float> params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore<float>& params,
                     const nlohmann::json& metadata = nlohmann::json::object());

// Throws FormatError for bad magic, unknown version, truncation, checksum
// mismatch, or parameters that disagree with the stored configuration.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace egqn::model
