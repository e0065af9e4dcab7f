#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "fedsig/model.h"

namespace fedsig {

void to_json(nlohmann::json& j, const ModelConfig& config);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& config);

// Writes `contents` to a sibling temporary file, then renames it over
// `path`, so readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path,
                       const std::string& contents);

// Shortest round-trip decimal representation.
std::string format_double(double value);

}  // namespace fedsig
