#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pfl/checkpoint.hpp"
#include "pfl/cli.hpp"
#include "pfl/error.hpp"
#include "pfl/evaluation.hpp"

using namespace pfl;
namespace fs = std::filesystem;

namespace {

Json small_config_json() {
  return Json::parse(R"({
    "synth": {"frame_dim": 16, "frames_per_seq": 3, "n_test_ids": 6, "noise_std": 1.0,
              "view_warp_strength": 2.0, "cloth_shift_magnitude": 2.0},
    "model": {"frame_dim": 16, "feature_dim": 16, "parts": 4, "embed_dim": 4, "head_hidden": 8},
    "train_phase1": {"lr": 0.02, "total_iters": 100, "batch": {"p": 4, "k": 4}, "eval_every": 5},
    "train_phase2": {"lr": 0.005, "total_iters": 40, "batch": {"p": 4, "k": 4}, "eval_every": 5},
    "train_baseline": {"lr": 0.02, "total_iters": 40, "batch": {"p": 4, "k": 4}, "eval_every": 5}
  })");
}

struct Workspace {
  fs::path dir;
  fs::path config;

  explicit Workspace(const std::string& name, const Json& cfg = small_config_json()) {
    dir = fs::temp_directory_path() / ("pfl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    config = dir / "config.json";
    std::ofstream(config) << cfg.dump(2);
  }
  fs::path sub(const std::string& name) const {
    fs::create_directories(dir / name);
    return dir / name;
  }
};

int run(std::vector<std::string> args, std::string* output = nullptr) {
  args.insert(args.begin(), "pfl");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (output) *output = out.str() + err.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST(RunConfig, JsonRoundTripAndDefaults) {
  const RunConfig c = run_config_from_json(small_config_json());
  EXPECT_EQ(c.model.feature_dim, 16u);
  EXPECT_EQ(c.train_phase1.phase, Objective::IdentityOnly);
  EXPECT_EQ(c.train_phase2.phase, Objective::Full);
  EXPECT_EQ(c.train_baseline.phase, Objective::Baseline);
  EXPECT_EQ(c.train_phase1.batch, (BatchSpec{4, 4}));
  EXPECT_EQ(c.synth.n_train_ids, SynthConfig{}.n_train_ids);
  const RunConfig back = run_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(RunConfig, InvalidValuesAreConfigErrors) {
  Json j = small_config_json();
  j["model"]["feature_dim"] = 15;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = small_config_json();
  j["train_phase1"]["lr"] = "fast";
  EXPECT_THROW(run_config_from_json(j), ConfigError);
  j = small_config_json();
  j["synth"]["frame_dim"] = 8;
  EXPECT_THROW(run_config_from_json(j), ConfigError);
}

TEST(CliGen, DefaultRatioAndDeterminism) {
  Workspace w("gen");
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--seed", "3", "--out", w.sub("a").string()}), kExitOk);
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--seed", "3", "--out", w.sub("b").string()}), kExitOk);
  EXPECT_EQ(slurp(w.dir / "a" / kManifestFile), slurp(w.dir / "b" / kManifestFile));
  const Json summary = Json::parse(slurp(w.dir / "a" / kDataSummaryFile));
  EXPECT_GE(summary["ratio"].get<double>(), 2.85);
  EXPECT_LE(summary["ratio"].get<double>(), 3.15);
}

TEST(CliGen, BadRatioExitsTwo) {
  Json cfg = small_config_json();
  cfg["synth"]["target_ratio"] = 200.0;
  Workspace w("gen_bad", cfg);
  EXPECT_EQ(run({"gen", "--config", w.config.string(), "--out", w.sub("a").string()}), kExitUsage);
  EXPECT_EQ(run({"gen", "--config", (w.dir / "missing.json").string(), "--out", w.sub("b").string()}), kExitUsage);
}

TEST(CliTrain, PipelineAndErrors) {
  Workspace w("train");
  const std::string data = (w.sub("data") / kManifestFile).string();
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--seed", "1", "--out", w.sub("data").string()}), kExitOk);

  const fs::path p1 = w.sub("p1");
  ASSERT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "identity_only", "--out",
                 p1.string()}),
            kExitOk);
  const std::string ckpt_text = slurp(p1 / kCheckpointFile);
  const Checkpoint ckpt = checkpoint_from_string(ckpt_text);
  EXPECT_EQ(ckpt.phase, Objective::IdentityOnly);
  EXPECT_EQ(checkpoint_to_string(ckpt), ckpt_text);
  EXPECT_EQ(parse_metrics_csv(slurp(p1 / kMetricsFile)).size(), 20u);

  EXPECT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "full", "--out",
                 w.sub("bad").string()}),
            kExitUsage);
  EXPECT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "sideways", "--out",
                 w.sub("bad").string()}),
            kExitUsage);

  const fs::path p2 = w.sub("p2");
  ASSERT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "full", "--pretrained",
                 (p1 / kCheckpointFile).string(), "--out", p2.string()}),
            kExitOk);
  const auto rows = parse_metrics_csv(slurp(p2 / kMetricsFile));
  ASSERT_FALSE(rows.empty());
  EXPECT_TRUE(rows.front().sigma_c_mean.has_value());

  // Trained beats untrained on CL.
  Json zero_cfg = small_config_json();
  zero_cfg["train_phase1"]["total_iters"] = 0;
  std::ofstream(w.dir / "zero.json") << zero_cfg.dump();
  const fs::path p0 = w.sub("p0");
  ASSERT_EQ(run({"train", "--config", (w.dir / "zero.json").string(), "--data", data, "--phase", "identity_only",
                 "--out", p0.string()}),
            kExitOk);
  ASSERT_EQ(run({"eval", "--checkpoint", (p0 / kCheckpointFile).string(), "--data", data, "--out", p0.string()}),
            kExitOk);
  ASSERT_EQ(run({"eval", "--checkpoint", (p2 / kCheckpointFile).string(), "--data", data, "--out", p2.string()}),
            kExitOk);
  const Json untrained = Json::parse(slurp(p0 / kEvalJsonFile));
  const Json trained = Json::parse(slurp(p2 / kEvalJsonFile));
  EXPECT_GT(trained["average"]["CL"].get<double>(), untrained["average"]["CL"].get<double>());
}

TEST(CliTrain, MismatchedPretrainedIsUsageError) {
  Workspace w("train_mismatch");
  const std::string data = (w.sub("data") / kManifestFile).string();
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--out", w.sub("data").string()}), kExitOk);
  Json other = small_config_json();
  other["model"]["embed_dim"] = 2;
  std::ofstream(w.dir / "other.json") << other.dump();
  const fs::path p1 = w.sub("p1");
  ASSERT_EQ(run({"train", "--config", (w.dir / "other.json").string(), "--data", data, "--phase", "identity_only",
                 "--out", p1.string()}),
            kExitOk);
  EXPECT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "full", "--pretrained",
                 (p1 / kCheckpointFile).string(), "--out", w.sub("p2").string()}),
            kExitUsage);
}

TEST(CliTrain, DivergenceExitsThree) {
  Json cfg = small_config_json();
  cfg["train_phase1"]["lr"] = 1e12;
  cfg["train_phase1"]["momentum"] = 0.99;
  cfg["train_phase1"]["total_iters"] = 200;
  Workspace w("diverge", cfg);
  const std::string data = (w.sub("data") / kManifestFile).string();
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--out", w.sub("data").string()}), kExitOk);
  std::string output;
  EXPECT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "identity_only", "--out",
                 w.sub("p1").string()},
                &output),
            kExitNumeric)
      << output;
}

TEST(CliEval, SelfGalleryAndAverages) {
  Workspace w("eval");
  const std::string data = (w.sub("data") / kManifestFile).string();
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--out", w.sub("data").string()}), kExitOk);
  const fs::path p1 = w.sub("p1");
  ASSERT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "identity_only", "--out",
                 p1.string()}),
            kExitOk);
  const std::string ckpt = (p1 / kCheckpointFile).string();
  const fs::path self = w.sub("self");
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--data", data, "--out", self.string(), "--self-gallery"}), kExitOk);
  EXPECT_EQ(Json::parse(slurp(self / kEvalJsonFile))["average"]["NM"].get<double>(), 1.0);

  const fs::path normal = w.sub("normal");
  ASSERT_EQ(run({"eval", "--checkpoint", ckpt, "--data", data, "--out", normal.string()}), kExitOk);
  std::istringstream csv(slurp(normal / kEvalCsvFile));
  std::string line;
  std::getline(csv, line);
  std::map<std::string, std::pair<double, int>> sums;
  while (std::getline(csv, line)) {
    std::istringstream row(line);
    std::string cond, view, acc, n;
    std::getline(row, cond, ',');
    std::getline(row, view, ',');
    std::getline(row, acc, ',');
    sums[cond].first += std::stod(acc);
    sums[cond].second += 1;
  }
  const Json summary = Json::parse(slurp(normal / kEvalJsonFile));
  for (const auto& [cond, s] : sums) {
    EXPECT_NEAR(summary["average"][cond].get<double>(), s.first / s.second, 1e-12) << cond;
  }
  EXPECT_EQ(run({"eval", "--checkpoint", (w.dir / "nope.json").string(), "--data", data, "--out", normal.string()}),
            kExitUsage);
}

TEST(CliAnalyze, PhaseOneWarnsAndMissingMetricsSkipsTrajectory) {
  Workspace w("analyze");
  const std::string data = (w.sub("data") / kManifestFile).string();
  ASSERT_EQ(run({"gen", "--config", w.config.string(), "--out", w.sub("data").string()}), kExitOk);
  const fs::path p1 = w.sub("p1");
  ASSERT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "identity_only", "--out",
                 p1.string()}),
            kExitOk);
  const fs::path out = w.sub("an");
  ASSERT_EQ(run({"analyze", "--checkpoint", (p1 / kCheckpointFile).string(), "--data", data, "--out", out.string()}),
            kExitOk);
  const Json warnings = Json::parse(slurp(out / kWarningsFile))["warnings"];
  ASSERT_GE(warnings.size(), 2u);
  EXPECT_TRUE(fs::exists(out / kCcmSvdJsonFile));
  EXPECT_TRUE(fs::exists(out / kSigmaJsonFile));
  EXPECT_FALSE(fs::exists(out / kTrajectoryCsvFile));

  const fs::path p2 = w.sub("p2");
  ASSERT_EQ(run({"train", "--config", w.config.string(), "--data", data, "--phase", "full", "--pretrained",
                 (p1 / kCheckpointFile).string(), "--out", p2.string()}),
            kExitOk);
  const fs::path out2 = w.sub("an2");
  ASSERT_EQ(run({"analyze", "--checkpoint", (p2 / kCheckpointFile).string(), "--data", data, "--metrics",
                 (p2 / kMetricsFile).string(), "--out", out2.string()}),
            kExitOk);
  EXPECT_TRUE(Json::parse(slurp(out2 / kWarningsFile))["warnings"].empty());
  const Json traj = Json::parse(slurp(out2 / kTrajectoryJsonFile));
  EXPECT_EQ(traj["points"].get<int>(), 8);
}

TEST(CliGradcheck, ExitCodesAndGroupReport) {
  std::string output;
  EXPECT_EQ(run({"gradcheck", "--seed", "2"}, &output), kExitOk);
  for (const char* group : {"backbone", "head"}) EXPECT_NE(output.find(group), std::string::npos) << output;
  EXPECT_EQ(run({"gradcheck", "--inject-fault"}, &output), kExitCheckFailed);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}), kExitUsage);
  EXPECT_EQ(run({"frobnicate"}), kExitUsage);
  EXPECT_EQ(run({"gen", "--seed", "1"}), kExitUsage);
}
