#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>

#include "pfl/json_io.hpp"
#include "pfl/model.hpp"
#include "pfl/synthbench.hpp"
#include "pfl/trainer.hpp"

namespace pfl {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitNumeric = 3,
};

struct EvalOptions {
  bool exclude_identical_view = true;
};

struct RunConfig {
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train_phase1;
  TrainConfig train_phase2;
  TrainConfig train_baseline;
  EvalOptions eval;

  /// Throws ConfigError.
  void validate() const;
};

Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, Objective phase);
Json to_json(const RunConfig& c);
/// Missing sections and fields keep their defaults. Throws ConfigError.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const std::filesystem::path& path);

struct GenArgs {
  std::filesystem::path config;
  std::uint64_t seed = 1;
  std::filesystem::path out;
};

struct TrainArgs {
  std::filesystem::path config;
  std::filesystem::path data;
  std::string phase;
  std::optional<std::filesystem::path> pretrained;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
};

struct EvalArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::filesystem::path out;
  bool self_gallery = false;
  bool no_view_exclude = false;
};

struct AnalyzeArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::optional<std::filesystem::path> metrics;
  std::filesystem::path out;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  /// Adds a fixed offset to one analytic gradient entry.
  bool inject_fault = false;
};

// Output files, relative to the --out directory.
inline constexpr const char* kManifestFile = "manifest.jsonl";
inline constexpr const char* kDataSummaryFile = "summary.json";
inline constexpr const char* kCheckpointFile = "checkpoint.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kEvalCsvFile = "eval.csv";
inline constexpr const char* kEvalJsonFile = "eval_summary.json";
inline constexpr const char* kSigmaJsonFile = "sigma.json";
inline constexpr const char* kSigmaPartsFile = "sigma_parts.csv";
inline constexpr const char* kCcmSvdJsonFile = "ccm_svd.json";
inline constexpr const char* kCcmSvdCsvFile = "ccm_svd.csv";
inline constexpr const char* kTrajectoryCsvFile = "sigma_trajectory.csv";
inline constexpr const char* kTrajectoryJsonFile = "sigma_trajectory.json";
inline constexpr const char* kWarningsFile = "warnings.json";

// Each command reports errors on `log` and returns an ExitCode.
int cmd_gen(const GenArgs& args, std::ostream& log);
int cmd_train(const TrainArgs& args, std::ostream& log);
int cmd_eval(const EvalArgs& args, std::ostream& log);
int cmd_analyze(const AnalyzeArgs& args, std::ostream& log);
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& log);

/// Parses argv with subcommands gen, train, eval, analyze, gradcheck.
int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace pfl
