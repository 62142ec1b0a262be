#include "pfl/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include "pfl/analysis.hpp"
#include "pfl/checkpoint.hpp"
#include "pfl/error.hpp"
#include "pfl/evaluation.hpp"
#include "pfl/gradcheck.hpp"

namespace pfl {

namespace fs = std::filesystem;

namespace {

const char* to_string(SigmaReduction r) {
  return r == SigmaReduction::ChannelMean ? "channel_mean" : "elementwise";
}

SigmaReduction parse_sigma_reduction(const std::string& s) {
  if (s == "channel_mean") return SigmaReduction::ChannelMean;
  if (s == "elementwise") return SigmaReduction::Elementwise;
  throw ConfigError("unknown sigma_reduction '" + s + "'");
}

void require_compatible(const ModelConfig& model, const Dataset& data) {
  if (model.frame_dim != static_cast<std::size_t>(data.config.frame_dim)) {
    throw LoadError(fmt::format("model expects frame_dim {} but the data has frame_dim {}", model.frame_dim,
                                data.config.frame_dim));
  }
}

std::string warnings_json(const std::vector<std::string>& warnings) {
  return Json{{"warnings", warnings}}.dump(2) + "\n";
}

/// Runs `body` and maps library errors onto exit codes.
int guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericError& e) {
    log << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Json::exception& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    log << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace

void RunConfig::validate() const {
  synth.validate();
  model.validate();
  train_phase1.validate();
  train_phase2.validate();
  train_baseline.validate();
  if (static_cast<std::size_t>(synth.frame_dim) != model.frame_dim) {
    throw ConfigError(fmt::format("synth.frame_dim ({}) must equal model.frame_dim ({})", synth.frame_dim,
                                  model.frame_dim));
  }
}

Json to_json(const TrainConfig& c) {
  return Json{{"lr", c.lr},
              {"milestones", c.milestones},
              {"lr_decay", c.lr_decay},
              {"momentum", c.momentum},
              {"total_iters", c.total_iters},
              {"batch", Json{{"p", c.batch.p}, {"k", c.batch.k}}},
              {"margin", c.margin},
              {"seed", c.seed},
              {"eval_every", c.eval_every},
              {"weight_decay", c.weight_decay},
              {"sigma_reduction", to_string(c.sigma_reduction)}};
}

TrainConfig train_config_from_json(const Json& j, Objective phase) {
  TrainConfig c;
  c.phase = phase;
  c.lr = j.value("lr", c.lr);
  c.milestones = j.value("milestones", c.milestones);
  c.lr_decay = j.value("lr_decay", c.lr_decay);
  c.momentum = j.value("momentum", c.momentum);
  c.total_iters = j.value("total_iters", c.total_iters);
  if (j.contains("batch")) {
    c.batch.p = j["batch"].value("p", c.batch.p);
    c.batch.k = j["batch"].value("k", c.batch.k);
  }
  c.margin = j.value("margin", c.margin);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.sigma_reduction = parse_sigma_reduction(j.value("sigma_reduction", std::string("channel_mean")));
  return c;
}

Json to_json(const RunConfig& c) {
  return Json{{"synth", to_json(c.synth)},
              {"model", to_json(c.model)},
              {"train_phase1", to_json(c.train_phase1)},
              {"train_phase2", to_json(c.train_phase2)},
              {"train_baseline", to_json(c.train_baseline)},
              {"eval", Json{{"exclude_identical_view", c.eval.exclude_identical_view}}}};
}

RunConfig run_config_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    RunConfig c;
    const Json empty = Json::object();
    auto section = [&](const char* name) -> const Json& { return j.contains(name) ? j.at(name) : empty; };
    c.synth = synth_config_from_json(section("synth"));
    c.model = model_config_from_json(section("model"));
    c.train_phase1 = train_config_from_json(section("train_phase1"), Objective::IdentityOnly);
    c.train_phase2 = train_config_from_json(section("train_phase2"), Objective::Full);
    c.train_baseline = train_config_from_json(section("train_baseline"), Objective::Baseline);
    c.eval.exclude_identical_view = section("eval").value("exclude_identical_view", true);
    c.validate();
    return c;
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const Json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

int cmd_gen(const GenArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    const RunConfig config = load_run_config(args.config);
    Rng rng(args.seed);
    const Dataset dataset = generate_benchmark(config.synth, rng);
    save_manifest(dataset, args.out / kManifestFile);
    const DatasetSummary s = dataset.summary();
    write_file_atomic(args.out / kDataSummaryFile,
                      Json{{"sequences", s.sequences}, {"identities", s.identities}, {"ratio", s.ratio}}.dump(2) + "\n");
    log << fmt::format("wrote {} records (Xv:Xc ratio {:.4f}) to {}\n", dataset.records.size(), s.ratio,
                       args.out.string());
    return kExitOk;
  });
}

int cmd_train(const TrainArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    const Objective phase = parse_objective(args.phase);
    const RunConfig config = load_run_config(args.config);
    if (phase == Objective::Full && !args.pretrained) {
      throw ConfigError("phase full requires --pretrained <phase-1 checkpoint>");
    }
    const Dataset dataset = load_manifest(args.data);
    require_compatible(config.model, dataset);

    TrainResult result;
    if (phase == Objective::IdentityOnly) {
      TrainConfig tc = config.train_phase1;
      if (args.seed) tc.seed = *args.seed;
      result = train_phase1(dataset, config.model, tc);
    } else if (phase == Objective::Full) {
      TrainConfig tc = config.train_phase2;
      if (args.seed) tc.seed = *args.seed;
      const Checkpoint pre = load_checkpoint(*args.pretrained);
      if (to_json(pre.model_config) != to_json(config.model)) {
        throw LoadError("pretrained checkpoint model_config does not match the config");
      }
      result = train_phase2(dataset, pre.params, config.model, tc);
    } else {
      TrainConfig tc = config.train_baseline;
      if (args.seed) tc.seed = *args.seed;
      result = train_baseline(dataset, config.model, tc);
    }
    for (const auto& w : result.warnings) log << "warning: " << w << "\n";

    const int eval_every = phase == Objective::IdentityOnly ? config.train_phase1.eval_every
                           : phase == Objective::Full       ? config.train_phase2.eval_every
                                                            : config.train_baseline.eval_every;
    save_checkpoint({config.model, phase, result.params}, args.out / kCheckpointFile);
    write_file_atomic(args.out / kMetricsFile, metrics_csv(result.log, eval_every));
    if (!result.log.empty()) {
      log << fmt::format("{}: {} iterations, final loss {:.6g}\n", args.phase, result.log.size(),
                         result.log.back().total);
    }
    return kExitOk;
  });
}

int cmd_eval(const EvalArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const Dataset dataset = load_manifest(args.data);
    require_compatible(ckpt.model_config, dataset);
    const std::vector<SequenceRecord> test = dataset.subset(Subset::Test);

    std::vector<EmbeddedSequence> gallery;
    std::map<Condition, std::vector<EmbeddedSequence>> probes;
    std::vector<std::string> warnings;
    bool exclude = !args.no_view_exclude;
    if (args.self_gallery) {
      gallery = embed_records(test, ckpt.params, ckpt.model_config);
      for (const auto& e : gallery) probes[e.condition].push_back(e);
      exclude = false;
    } else {
      GalleryProbeSplit split = split_gallery_probe(test, dataset.config.gallery_nm_per_view);
      warnings = std::move(split.warnings);
      gallery = embed_records(split.gallery, ckpt.params, ckpt.model_config);
      for (const auto& [c, list] : split.probes) probes[c] = embed_records(list, ckpt.params, ckpt.model_config);
    }
    EvalReport report = rank1(gallery, probes, exclude);
    report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
    for (const auto& w : report.warnings) log << "warning: " << w << "\n";

    write_file_atomic(args.out / kEvalCsvFile, report_csv(report));
    write_file_atomic(args.out / kEvalJsonFile, report_summary_json(report));
    for (const auto& [c, cr] : report.conditions) {
      if (cr.average) log << fmt::format("{} rank-1 {:.2f}%\n", to_string(c), 100.0 * *cr.average);
    }
    return kExitOk;
  });
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    const Checkpoint ckpt = load_checkpoint(args.checkpoint);
    const Dataset dataset = load_manifest(args.data);
    require_compatible(ckpt.model_config, dataset);
    const std::vector<SequenceRecord> test = dataset.subset(Subset::Test);
    std::vector<std::string> warnings;

    const SigmaReport sigma = sigma_statistics(test, ckpt.params, ckpt.model_config, ckpt.phase);
    warnings.insert(warnings.end(), sigma.warnings.begin(), sigma.warnings.end());
    write_file_atomic(args.out / kSigmaJsonFile, sigma_report_json(sigma));
    write_file_atomic(args.out / kSigmaPartsFile, sigma_parts_csv(sigma));

    const CcmSvdReport svd_report = ccm_svd_analysis(ckpt.params, test, ckpt.model_config);
    write_file_atomic(args.out / kCcmSvdJsonFile, ccm_svd_json(svd_report));
    write_file_atomic(args.out / kCcmSvdCsvFile, ccm_svd_csv(svd_report));

    if (!args.metrics || !fs::exists(*args.metrics)) {
      warnings.push_back("metrics CSV not supplied or missing; sigma trajectory skipped");
    } else {
      try {
        const SigmaTrajectory t = sigma_trajectory(parse_metrics_csv(read_file(*args.metrics)));
        write_file_atomic(args.out / kTrajectoryCsvFile, trajectory_csv(t));
        write_file_atomic(args.out / kTrajectoryJsonFile, trajectory_json(t));
      } catch (const ParseError& e) {
        warnings.push_back(std::string("sigma trajectory skipped: ") + e.what());
      }
    }
    write_file_atomic(args.out / kWarningsFile, warnings_json(warnings));
    for (const auto& w : warnings) log << "warning: " << w << "\n";
    return kExitOk;
  });
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& log) {
  return guarded(log, [&] {
    GradcheckOptions options;
    options.seed = args.seed;
    if (args.inject_fault) {
      options.perturb_gradient = [](ModelParams& g) {
        for (auto& x : g.head_a.weight.data()) x = 1.01 * x + 1e-3;
      };
    }
    const GradcheckReport report = run_gradcheck(options);
    log << format_gradcheck(report);
    return report.passed ? kExitOk : kExitCheckFailed;
  });
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive feature learning toolkit"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate a synthetic benchmark manifest");
  gen_cmd->add_option("--config", gen.config, "Run config JSON")->required();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  TrainArgs train;
  std::string pretrained;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train one phase");
  train_cmd->add_option("--config", train.config, "Run config JSON")->required();
  train_cmd->add_option("--data", train.data, "Manifest produced by gen")->required();
  train_cmd->add_option("--phase", train.phase, "identity_only | full | baseline")->required();
  auto* pretrained_opt = train_cmd->add_option("--pretrained", pretrained, "Phase-1 checkpoint (phase full)");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Overrides the config seed");
  train_cmd->add_option("--out", train.out, "Output directory")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Rank-1 evaluation on the test split");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint JSON")->required();
  eval_cmd->add_option("--data", eval.data, "Manifest")->required();
  eval_cmd->add_option("--out", eval.out, "Output directory")->required();
  eval_cmd->add_flag("--self-gallery", eval.self_gallery, "Use every test sequence as gallery and probe");
  eval_cmd->add_flag("--no-view-exclude", eval.no_view_exclude, "Keep same-view gallery candidates");

  AnalyzeArgs analyze;
  std::string metrics;
  auto* analyze_cmd = app.add_subcommand("analyze", "Sigma and CCM diagnostics");
  analyze_cmd->add_option("--checkpoint", analyze.checkpoint, "Checkpoint JSON")->required();
  analyze_cmd->add_option("--data", analyze.data, "Manifest")->required();
  auto* metrics_opt = analyze_cmd->add_option("--metrics", metrics, "Phase-2 metrics CSV");
  analyze_cmd->add_option("--out", analyze.out, "Output directory")->required();

  GradcheckArgs grad;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of the loss gradients");
  grad_cmd->add_option("--seed", grad.seed, "Seed for the random configurations");
  grad_cmd->add_flag("--inject-fault", grad.inject_fault, "Corrupt the analytic gradient (detector sanity check)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  if (*gen_cmd) return cmd_gen(gen, err);
  if (*train_cmd) {
    if (*pretrained_opt) train.pretrained = pretrained;
    if (*seed_opt) train.seed = train_seed;
    return cmd_train(train, err);
  }
  if (*eval_cmd) return cmd_eval(eval, err);
  if (*analyze_cmd) {
    if (*metrics_opt) analyze.metrics = metrics;
    return cmd_analyze(analyze, err);
  }
  return cmd_gradcheck(grad, out);
}

}  // namespace pfl
