#include "pfl/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <fmt/format.h>

#include "pfl/error.hpp"

namespace pfl {

namespace {

// Independent RNG streams of one run.
enum Stream : std::uint64_t { kInitStream = 0, kBatchStream = 1, kNoiseStream = 2 };

TrainResult run(const Dataset& dataset, ModelParams params, const ModelConfig& model_config,
                const TrainConfig& config) {
  model_config.validate();
  config.validate();
  params.check_shapes(model_config);

  const std::set<ParamGroup> trainable = trainable_groups(config.phase);
  const LossConfig loss_config = config.loss_config();
  Rng batch_rng = Rng::stream(config.seed, kBatchStream);
  Rng noise_rng = Rng::stream(config.seed, kNoiseStream);
  ModelParams velocity = ModelParams::zeros(model_config);

  TrainResult result;
  std::set<std::string> seen_warnings;
  const auto start = std::chrono::steady_clock::now();

  for (int it = 0; it < config.total_iters; ++it) {
    const double lr = lr_schedule(it, config);
    const Batch batch = config.phase == Objective::Baseline ? sample_uniform_batch(dataset, config.batch, batch_rng)
                                                            : sample_batch(dataset, config.batch, batch_rng);
    for (const auto& w : batch.warnings)
      if (seen_warnings.insert(w).second) result.warnings.push_back(w);

    const TripletSets sets = build_triplet_sets(batch);
    NoiseDraw noise;
    if (config.phase == Objective::Full) noise = draw_noise(batch.entries.size(), model_config, noise_rng);

    ModelParams grads = ModelParams::zeros(model_config);
    SigmaStats sigma;
    ObjectiveOptions options;
    options.grads = &grads;
    options.sigma_stats = &sigma;
    const LossBreakdown loss = evaluate_objective(config.phase, batch, sets, dataset.records, params, model_config,
                                                  loss_config, &noise, options);
    sgd_step(params, grads, velocity, lr, config.momentum, config.weight_decay, &trainable);
    if (!params.all_finite()) throw NumericError("parameters diverged at iteration " + std::to_string(it));

    MetricsRow row;
    row.iter = it;
    row.lr = lr;
    row.l_tv = loss.l_tv;
    row.l_tc = loss.l_tc;
    row.l_tv_e = loss.l_tv_e;
    row.l_tc_e = loss.l_tc_e;
    row.total = loss.total;
    if (config.phase == Objective::Full) {
      row.sigma_v_mean = sigma.sigma_v_mean;
      row.sigma_c_mean = sigma.sigma_c_mean;
    }
    row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(row);
  }
  result.params = std::move(params);
  return result;
}

std::string field(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

std::optional<double> parse_field(const std::string& text, std::size_t line) {
  if (text.empty()) return std::nullopt;
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != text.size()) throw ParseError("metrics line " + std::to_string(line) + ": bad number '" + text + "'");
  return v;
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(lr > 0.0)) fail("lr must be positive");
  if (!(lr_decay > 0.0 && lr_decay < 1.0)) fail("lr_decay must lie in (0, 1)");
  if (!(momentum >= 0.0 && momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (total_iters < 0) fail("total_iters must be >= 0");
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (i > 0 && milestones[i] <= milestones[i - 1]) fail("milestones must be strictly increasing");
    if (milestones[i] >= total_iters) fail("milestones must be < total_iters");
  }
  if (eval_every < 1) fail("eval_every must be >= 1");
  if (weight_decay < 0.0) fail("weight_decay must be >= 0");
  batch.validate();
  loss_config().validate();
}

double lr_schedule(int iter, const TrainConfig& config) {
  const auto passed = std::count_if(config.milestones.begin(), config.milestones.end(),
                                    [iter](int m) { return m <= iter; });
  return config.lr * std::pow(config.lr_decay, static_cast<double>(passed));
}

void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity, double lr, double momentum,
              double weight_decay, const std::set<ParamGroup>* trainable) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  auto v = velocity.tensors();
  if (p.size() != g.size() || p.size() != v.size()) throw ShapeError("sgd_step: parameter sets differ");
  for (std::size_t t = 0; t < p.size(); ++t) {
    if (p[t].data.size() != g[t].data.size() || p[t].data.size() != v[t].data.size()) {
      throw ShapeError("sgd_step: shape mismatch in " + p[t].name);
    }
    if (trainable && !trainable->contains(p[t].group)) continue;
    for (std::size_t i = 0; i < p[t].data.size(); ++i) {
      v[t].data[i] = momentum * v[t].data[i] + (g[t].data[i] + weight_decay * p[t].data[i]);
      p[t].data[i] -= lr * v[t].data[i];
    }
  }
}

std::set<ParamGroup> trainable_groups(Objective phase) {
  switch (phase) {
    case Objective::IdentityOnly:
      return {ParamGroup::Backbone, ParamGroup::IdentityCvm, ParamGroup::IdentityCcm};
    case Objective::Baseline:
      return {ParamGroup::Backbone, ParamGroup::IdentityCvm};
    case Objective::Full:
      break;
  }
  return {ParamGroup::Backbone,     ParamGroup::IdentityCvm,    ParamGroup::IdentityCcm,
          ParamGroup::Head,         ParamGroup::UncertaintyCvm, ParamGroup::UncertaintyCcm};
}

TrainResult train_phase1(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config) {
  if (config.phase != Objective::IdentityOnly) throw ConfigError("train_phase1 requires phase identity_only");
  model_config.validate();
  Rng init = Rng::stream(config.seed, kInitStream);
  return run(dataset, initialize_params(model_config, init), model_config, config);
}

TrainResult train_phase2(const Dataset& dataset, const ModelParams& pretrained, const ModelConfig& model_config,
                         const TrainConfig& config) {
  if (config.phase != Objective::Full) throw ConfigError("train_phase2 requires phase full");
  try {
    pretrained.check_shapes(model_config);
  } catch (const ShapeError& e) {
    throw LoadError(std::string("pretrained parameters incompatible: ") + e.what());
  }
  return run(dataset, pretrained, model_config, config);
}

TrainResult train_baseline(const Dataset& dataset, const ModelConfig& model_config, const TrainConfig& config) {
  if (config.phase != Objective::Baseline) throw ConfigError("train_baseline requires phase baseline");
  model_config.validate();
  Rng init = Rng::stream(config.seed, kInitStream);
  ModelParams params = initialize_params(model_config, init);
  for (auto& ccm : params.id_ccm) ccm = Affine(model_config.embed_dim, model_config.embed_dim);
  return run(dataset, std::move(params), model_config, config);
}

std::string metrics_csv(const std::vector<MetricsRow>& log, int eval_every) {
  std::string out = kMetricsHeader;
  out += '\n';
  for (const auto& r : log) {
    if (r.iter % eval_every != 0) continue;
    out += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.iter, r.lr, field(r.l_tv), field(r.l_tc), field(r.l_tv_e),
                       field(r.l_tc_e), r.total, field(r.sigma_v_mean), field(r.sigma_c_mean));
  }
  return out;
}

std::vector<MetricsRow> parse_metrics_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kMetricsHeader) throw ParseError("metrics CSV: unexpected header");
  std::vector<MetricsRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (cells.size() != 9) {
      throw ParseError("metrics line " + std::to_string(line_no) + ": expected 9 fields, got " +
                       std::to_string(cells.size()));
    }
    MetricsRow r;
    const auto iter = parse_field(cells[0], line_no);
    const auto lr = parse_field(cells[1], line_no);
    const auto total = parse_field(cells[6], line_no);
    if (!iter || !lr || !total) throw ParseError("metrics line " + std::to_string(line_no) + ": missing field");
    r.iter = static_cast<int>(*iter);
    r.lr = *lr;
    r.l_tv = parse_field(cells[2], line_no);
    r.l_tc = parse_field(cells[3], line_no);
    r.l_tv_e = parse_field(cells[4], line_no);
    r.l_tc_e = parse_field(cells[5], line_no);
    r.total = *total;
    r.sigma_v_mean = parse_field(cells[7], line_no);
    r.sigma_c_mean = parse_field(cells[8], line_no);
    if (!rows.empty() && r.iter <= rows.back().iter) {
      throw ParseError("metrics line " + std::to_string(line_no) + ": iter not increasing");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace pfl
