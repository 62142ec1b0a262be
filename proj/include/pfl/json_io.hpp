#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "pfl/model.hpp"
#include "pfl/synthbench.hpp"

namespace pfl {

using Json = nlohmann::json;

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);
Json to_json(const SynthConfig& c);
SynthConfig synth_config_from_json(const Json& j);

/// Writes `contents` to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace pfl
