#include <gtest/gtest.h>

#include <filesystem>

#include "pfl/checkpoint.hpp"
#include "pfl/error.hpp"
#include "pfl/json_io.hpp"

using namespace pfl;
namespace fs = std::filesystem;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint c;
  c.model_config.frame_dim = 3;
  c.model_config.feature_dim = 4;
  c.model_config.parts = 2;
  c.model_config.embed_dim = 3;
  c.model_config.head_hidden = 2;
  c.phase = Objective::Full;
  Rng rng(1);
  c.params = initialize_params(c.model_config, rng);
  // Awkward values that need all 17 significant digits.
  c.params.backbone.weight(0, 0) = 0.1 + 0.2;
  c.params.backbone.bias[1] = 1e-310;
  c.params.id_cvm[0].bias[2] = -123456789.123456789;
  return c;
}

}  // namespace

TEST(Checkpoint, StringRoundTripIsBitExact) {
  const Checkpoint c = sample_checkpoint();
  const std::string text = checkpoint_to_string(c);
  const Checkpoint back = checkpoint_from_string(text);
  EXPECT_EQ(back.params, c.params);
  EXPECT_EQ(back.model_config, c.model_config);
  EXPECT_EQ(back.phase, c.phase);
  EXPECT_EQ(checkpoint_to_string(back), text);
}

TEST(Checkpoint, FileRoundTrip) {
  const fs::path dir = fs::temp_directory_path() / "pfl_ckpt_test";
  fs::create_directories(dir);
  const Checkpoint c = sample_checkpoint();
  save_checkpoint(c, dir / "c.json");
  EXPECT_EQ(load_checkpoint(dir / "c.json").params, c.params);
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path().filename().string().find(".tmp"), std::string::npos);
}

TEST(Checkpoint, MalformedJsonIsParseError) {
  EXPECT_THROW(checkpoint_from_string("{not json"), ParseError);
}

TEST(Checkpoint, MissingOrMisshapenTensorIsLoadError) {
  const Checkpoint c = sample_checkpoint();
  Json j = Json::parse(checkpoint_to_string(c));
  Json missing = j;
  missing["params"].erase(missing["params"].begin());
  EXPECT_THROW(checkpoint_from_string(missing.dump()), LoadError);
  Json shaped = j;
  auto& first = *shaped["params"].begin();
  first["rows"] = first["rows"].get<int>() + 1;
  EXPECT_THROW(checkpoint_from_string(shaped.dump()), LoadError);
  Json version = j;
  version["format_version"] = 99;
  EXPECT_THROW(checkpoint_from_string(version.dump()), LoadError);
}

TEST(Checkpoint, ParseObjective) {
  EXPECT_EQ(parse_objective("identity_only"), Objective::IdentityOnly);
  EXPECT_EQ(parse_objective("full"), Objective::Full);
  EXPECT_EQ(parse_objective("baseline"), Objective::Baseline);
  EXPECT_THROW(parse_objective("other"), ConfigError);
}
