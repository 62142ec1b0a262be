#include "pfl/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "pfl/error.hpp"
#include "pfl/linalg.hpp"
#include "pfl/sampling.hpp"

namespace pfl {

namespace {

constexpr std::size_t kWorstKept = 8;

struct Case {
  Objective objective = Objective::Full;
  SigmaReduction reduction = SigmaReduction::ChannelMean;
};

struct Problem {
  ModelConfig config;
  LossConfig loss;
  Objective objective = Objective::Full;
  Dataset dataset;
  Batch batch;
  TripletSets sets;
  NoiseDraw noise;
  ModelParams params;
};

Dataset tiny_dataset(const ModelConfig& config, Rng& rng) {
  Dataset ds;
  int seq = 0;
  auto add = [&](int id, Subset subset, Condition cond, int count) {
    for (int i = 0; i < count; ++i) {
      SequenceRecord r{id, cond, 0.0, subset, seq++, {}};
      for (int f = 0; f < 3; ++f) r.frames.push_back(standard_normal(rng, config.frame_dim));
      ds.records.push_back(std::move(r));
    }
  };
  for (int id = 0; id < 2; ++id) add(id, Subset::Xv, Condition::NM, 3);
  for (int id = 2; id < 4; ++id) {
    add(id, Subset::Xc, Condition::NM, 2);
    add(id, Subset::Xc, Condition::CL, 2);
  }
  return ds;
}

double evaluate(const Problem& pr, const ModelParams& params, std::vector<std::uint64_t>* decisions) {
  ObjectiveOptions options;
  options.decisions = decisions;
  return evaluate_objective(pr.objective, pr.batch, pr.sets, pr.dataset.records, params, pr.config, pr.loss,
                            &pr.noise, options)
      .total;
}

Problem make_problem(const Case& c, Rng& rng) {
  for (int attempt = 0; attempt < 50; ++attempt) {
    Problem pr;
    pr.objective = c.objective;
    pr.loss.sigma_reduction = c.reduction;
    pr.config.frame_dim = 2 + rng.uniform_index(3);
    pr.config.parts = 2;
    pr.config.feature_dim = 2 * (1 + rng.uniform_index(2));
    pr.config.embed_dim = 2 + rng.uniform_index(3);
    pr.config.head_hidden = 2 + rng.uniform_index(3);
    pr.loss.margin = rng.uniform(0.2, 2.0);

    pr.params = initialize_params(pr.config, rng);
    // Offsets keep most ReLUs open so every tensor receives gradient.
    for (auto& b : pr.params.backbone.bias) b = rng.uniform(0.0, 0.5);
    for (auto& b : pr.params.head_b.bias) b = rng.uniform(0.0, 0.5);
    for (auto& a : pr.params.un_cvm)
      for (auto& b : a.bias) b = rng.uniform(0.2, 1.0);
    for (auto& a : pr.params.id_ccm)
      for (auto& w : a.weight.data()) w *= 5.0;
    for (auto& a : pr.params.un_ccm)
      for (auto& w : a.weight.data()) w *= 5.0;

    pr.dataset = tiny_dataset(pr.config, rng);
    pr.batch = c.objective == Objective::Baseline ? sample_uniform_batch(pr.dataset, {4, 2}, rng)
                                                  : sample_batch(pr.dataset, {4, 2}, rng);
    pr.sets = build_triplet_sets(pr.batch);
    pr.noise = draw_noise(pr.batch.entries.size(), pr.config, rng);
    if (evaluate(pr, pr.params, nullptr) > 0.0) return pr;
  }
  throw NumericError("gradcheck: could not draw a configuration with an active hinge");
}

}  // namespace

double relative_error(double analytic, double numeric, double floor) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / scale;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  const auto start = std::chrono::steady_clock::now();
  std::vector<Case> cases(static_cast<std::size_t>(options.configs), Case{});
  if (options.include_variants) {
    cases.push_back({Objective::IdentityOnly, SigmaReduction::ChannelMean});
    cases.push_back({Objective::IdentityOnly, SigmaReduction::ChannelMean});
    cases.push_back({Objective::Baseline, SigmaReduction::ChannelMean});
    cases.push_back({Objective::Full, SigmaReduction::Elementwise});
    cases.push_back({Objective::Full, SigmaReduction::Elementwise});
  }

  GradcheckReport report;
  std::vector<CoordinateError> errors;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    Rng rng = Rng::stream(options.seed, 100 + ci);
    const Problem pr = make_problem(cases[ci], rng);

    ModelParams analytic = ModelParams::zeros(pr.config);
    ObjectiveOptions grad_options;
    grad_options.grads = &analytic;
    evaluate_objective(pr.objective, pr.batch, pr.sets, pr.dataset.records, pr.params, pr.config, pr.loss, &pr.noise,
                       grad_options);
    if (options.perturb_gradient) options.perturb_gradient(analytic);

    std::vector<std::uint64_t> base_decisions;
    const double loss = evaluate(pr, pr.params, &base_decisions);
    const double floor = kRelativeFloor * std::max(1.0, std::abs(loss));

    const Vector theta = flatten(pr.params);
    const Vector analytic_flat = flatten(analytic);
    ModelParams probe = pr.params;
    const ScalarFunction loss_at = [&](std::span<const double> x) {
      unflatten(x, probe);
      return evaluate(pr, probe, nullptr);
    };

    std::size_t offset = 0;
    for (const auto& tensor : pr.params.tensors()) {
      GroupSummary& group = report.groups[to_string(tensor.group)];
      for (std::size_t i = 0; i < tensor.data.size(); ++i) {
        const std::size_t k = offset + i;
        bool near_kink = false;
        Vector shifted = theta;
        for (double sign : {-1.0, 1.0}) {
          shifted[k] = theta[k] + sign * options.kink_radius;
          unflatten(shifted, probe);
          std::vector<std::uint64_t> d;
          evaluate(pr, probe, &d);
          near_kink = near_kink || d != base_decisions;
        }
        if (near_kink) {
          ++group.excluded;
          continue;
        }
        // Central difference on this coordinate only.
        const ScalarFunction along = [&](std::span<const double> t) {
          shifted[k] = t[0];
          return loss_at(shifted);
        };
        shifted[k] = theta[k];
        const double numeric = finite_diff_grad(along, std::span<const double>(&theta[k], 1), options.step)[0];
        const double err = relative_error(analytic_flat[k], numeric, floor);
        ++group.checked;
        group.max_rel_error = std::max(group.max_rel_error, err);
        report.max_rel_error = std::max(report.max_rel_error, err);
        errors.push_back({static_cast<int>(ci), tensor.name, i, analytic_flat[k], numeric, err});
      }
      offset += tensor.data.size();
    }
    ++report.configs_run;
  }

  std::sort(errors.begin(), errors.end(),
            [](const CoordinateError& a, const CoordinateError& b) { return a.rel_error > b.rel_error; });
  if (errors.size() > kWorstKept) errors.resize(kWorstKept);
  report.worst = std::move(errors);
  report.passed = report.max_rel_error <= options.tolerance;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_gradcheck(const GradcheckReport& r) {
  std::string out = fmt::format("gradcheck: {} configurations, max relative error {:.3e} -> {}\n", r.configs_run,
                                r.max_rel_error, r.passed ? "PASS" : "FAIL");
  for (const auto& [name, g] : r.groups) {
    out += fmt::format("  {:<8} max_rel_error={:.3e} checked={} excluded_near_kink={}\n", name, g.max_rel_error,
                       g.checked, g.excluded);
  }
  if (!r.passed) {
    out += "  worst coordinates:\n";
    for (const auto& e : r.worst) {
      out += fmt::format("    config {} {}[{}] analytic={:.9g} numeric={:.9g} rel={:.3e}\n", e.config, e.tensor,
                         e.index, e.analytic, e.numeric, e.rel_error);
    }
  }
  return out;
}

}  // namespace pfl
