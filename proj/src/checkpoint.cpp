#include "pfl/checkpoint.hpp"

#include "pfl/error.hpp"
#include "pfl/json_io.hpp"

namespace pfl {

Objective parse_objective(const std::string& text) {
  if (text == "identity_only") return Objective::IdentityOnly;
  if (text == "full") return Objective::Full;
  if (text == "baseline") return Objective::Baseline;
  throw ConfigError("unknown phase '" + text + "' (expected identity_only, full or baseline)");
}

std::string checkpoint_to_string(const Checkpoint& checkpoint) {
  Json tensors = Json::object();
  for (const auto& t : checkpoint.params.tensors()) {
    tensors[t.name] = Json{{"rows", t.rows}, {"cols", t.cols}, {"data", std::vector<double>(t.data.begin(), t.data.end())}};
  }
  const Json j{{"format_version", kCheckpointFormatVersion},
               {"model_config", to_json(checkpoint.model_config)},
               {"phase", to_string(checkpoint.phase)},
               {"params", tensors}};
  return j.dump() + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("checkpoint: invalid JSON (") + e.what() + ")");
  }
  Checkpoint c;
  try {
    if (j.at("format_version").get<int>() != kCheckpointFormatVersion) {
      throw LoadError("checkpoint: unsupported format_version");
    }
    c.model_config = model_config_from_json(j.at("model_config"));
    c.model_config.validate();
    c.phase = parse_objective(j.at("phase").get<std::string>());
    c.params = ModelParams::zeros(c.model_config);
    const Json& tensors = j.at("params");
    for (auto& t : c.params.tensors()) {
      if (!tensors.contains(t.name)) throw LoadError("checkpoint: missing tensor " + t.name);
      const Json& entry = tensors.at(t.name);
      const auto rows = entry.at("rows").get<std::size_t>();
      const auto cols = entry.at("cols").get<std::size_t>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (rows != t.rows || cols != t.cols || data.size() != t.data.size()) {
        throw LoadError("checkpoint: tensor " + t.name + " has shape " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", model expects " + std::to_string(t.rows) + "x" +
                        std::to_string(t.cols));
      }
      std::copy(data.begin(), data.end(), t.data.begin());
    }
    if (tensors.size() != c.params.tensors().size()) throw LoadError("checkpoint: unexpected extra tensors");
  } catch (const Json::exception& e) {
    throw LoadError(std::string("checkpoint: malformed field (") + e.what() + ")");
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_string(checkpoint));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return checkpoint_from_string(read_file(path)); }

}  // namespace pfl
