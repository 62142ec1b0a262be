#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "pfl/losses.hpp"
#include "pfl/model.hpp"
#include "pfl/sampling.hpp"
#include "pfl/synthbench.hpp"

namespace pfl {

struct TrainConfig {
  /// IdentityOnly = phase 1, Full = phase 2, Baseline = one-stage ablation.
  Objective phase = Objective::IdentityOnly;
  double lr = 0.1;
  std::vector<int> milestones;
  double lr_decay = 0.1;
  double momentum = 0.9;
  int total_iters = 0;
  BatchSpec batch;
  double margin = 0.2;
  std::uint64_t seed = 1;
  /// Metrics CSV keeps every eval_every-th iteration.
  int eval_every = 10;
  double weight_decay = 5e-4;
  SigmaReduction sigma_reduction = SigmaReduction::ChannelMean;

  void validate() const;
  [[nodiscard]] LossConfig loss_config() const { return {margin, sigma_reduction}; }
};

struct MetricsRow {
  int iter = 0;
  double lr = 0.0;
  std::optional<double> l_tv;
  std::optional<double> l_tc;
  std::optional<double> l_tv_e;
  std::optional<double> l_tc_e;
  double total = 0.0;
  std::optional<double> sigma_v_mean;
  std::optional<double> sigma_c_mean;
  /// Not written to the CSV.
  double wall_seconds = 0.0;
};

struct TrainResult {
  ModelParams params;
  /// One row per iteration.
  std::vector<MetricsRow> log;
  std::vector<std::string> warnings;
};

/// lr · lr_decay^(number of milestones ≤ iter).
double lr_schedule(int iter, const TrainConfig& config);

/// Heavy-ball momentum with L2 weight decay folded into the gradient:
///   v ← momentum·v + (g + weight_decay·θ);  θ ← θ − lr·v.
/// Tensors whose group is not in `trainable` are left untouched.
void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, double lr, double momentum,
              double weight_decay, const std::set<ParamGroup>* trainable = nullptr);

/// Groups updated in each phase.
std::set<ParamGroup> trainable_groups(Objective phase);

/// Phase 1: identity branch only, normal progressive triplet losses.
TrainResult train_phase1(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config);
/// Phase 2: start from `pretrained` and train everything under the full objective.
TrainResult train_phase2(const Dataset& dataset, const ModelParams& pretrained, const ModelConfig& model_config,
                         const TrainConfig& config);
/// One-stage ablation: CCM held at zero, conventional PK batches, normal
/// triplet loss over the whole batch.
TrainResult train_baseline(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config);

inline constexpr const char* kMetricsHeader = "iter,lr,L_tv,L_tc,L_tv_e,L_tc_e,total,sigma_v_mean,sigma_c_mean";

/// Rows whose iter is a multiple of eval_every. Undefined fields are empty.
std::string metrics_csv(const std::vector<MetricsRow>& log, int eval_every);
/// Throws ParseError on a bad header or malformed row.
std::vector<MetricsRow> parse_metrics_csv(const std::string& text);

}  // namespace pfl
