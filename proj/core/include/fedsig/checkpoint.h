#pragma once

// Parameter checkpoint file (little-endian throughout):
//
//   offset  size  field
//   0       8     magic "FSIGCKPT"
//   8       4     uint32 format version (currently 1)
//   12      4     uint32 header length H
//   16      H     UTF-8 JSON object: {"model_config": {...}, ...}
//   16+H    8     uint64 scalar count P
//   24+H    8*P   IEEE-754 binary64 values in flatten_params order
//
// The JSON header echoes the ModelConfig so a checkpoint can be loaded
// without outside knowledge; extra header keys are preserved as metadata.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fedsig/model.h"

namespace fedsig {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  nlohmann::json metadata = nlohmann::json::object();
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fedsig
