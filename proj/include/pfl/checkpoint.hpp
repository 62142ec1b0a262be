#pragma once

#include <filesystem>
#include <string>

#include "pfl/losses.hpp"
#include "pfl/model.hpp"

namespace pfl {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  /// Objective the parameters were last trained under.
  Objective phase = Objective::IdentityOnly;
  ModelParams params;
};

/// JSON text: {format_version, model_config, phase, params: {name: {rows, cols, data}}}.
/// Doubles are written in shortest round-trip form, so load(save(x)) == x.
std::string checkpoint_to_string(const Checkpoint& checkpoint);
/// Throws ParseError on malformed JSON, LoadError on missing or misshapen tensors.
Checkpoint checkpoint_from_string(const std::string& text);

/// Atomic write (temporary file then rename).
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Objective parse_objective(const std::string& text);

}  // namespace pfl
