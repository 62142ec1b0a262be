#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfl/model.hpp"
#include "pfl/rng.hpp"
#include "pfl/sampling.hpp"

namespace pfl {

/// How σ enters the denominators of the uncertainty-aware loss.
enum class SigmaReduction {
  /// ‖Δ‖² / (s_a + s_b) with s = mean over channels of σ².
  ChannelMean,
  /// Σ_c Δ_c² / (σ_a,c² + σ_b,c²). Not the default.
  Elementwise,
};

inline constexpr double kDenominatorFloor = 1e-6;

struct LossConfig {
  double margin = 0.2;
  SigmaReduction sigma_reduction = SigmaReduction::ChannelMean;

  void validate() const;
};

/// Which loss terms are active.
enum class Objective {
  /// Phase 1: mean of the normal losses on T_v (μ_v) and T_c (μ_c).
  IdentityOnly,
  /// Phase 2: mean of the four uncertainty-aware terms.
  Full,
  /// One-stage ablation: normal loss on T_c only.
  Baseline,
};

const char* to_string(Objective o) noexcept;

struct LossBreakdown {
  std::optional<double> l_tv;
  std::optional<double> l_tc;
  std::optional<double> l_tv_e;
  std::optional<double> l_tc_e;
  double total = 0.0;
  /// Contribution of each part to `total`; sums to `total`.
  std::vector<double> per_part;
  /// Diagnostics such as an empty T_v.
  std::vector<std::string> flags;
};

/// Mean over parts of the mean over T of [‖x_a−x_p‖² − ‖x_a−x_n‖² + m]_+.
/// Returns 0 for an empty T.
double triplet_loss_normal(std::span<const Triplet> triplets, const std::vector<PartVectors>& embeddings,
                           const LossConfig& cfg);

/// Uncertainty-aware variant with σ-dependent denominators floored at
/// kDenominatorFloor. Throws NumericError on non-finite input, InputError on
/// negative σ. Returns 0 for an empty T.
double triplet_loss_uncertainty(std::span<const Triplet> triplets, const std::vector<PartVectors>& mu,
                                const std::vector<PartVectors>& sigma, const LossConfig& cfg);

/// Four-term objective. Embeddings lacking e_v / e_c get them sampled from
/// `rng` in entry order (ε_v then ε_c per entry).
LossBreakdown total_loss(const TripletSets& sets, std::vector<ProgressiveEmbedding>& embeddings,
                         const LossConfig& cfg, Rng& rng);

/// Fixed reparameterization noise for every batch entry.
struct NoiseDraw {
  std::vector<PartVectors> eps_v;
  std::vector<PartVectors> eps_c;
};
NoiseDraw draw_noise(std::size_t entries, const ModelConfig& config, Rng& rng);

/// Batch-level σ means, filled for the Full objective.
struct SigmaStats {
  double sigma_v_mean = 0.0;
  double sigma_c_mean = 0.0;
};

struct ObjectiveOptions {
  /// Accumulate d(total)/d(params) here when non-null (must be zero-shaped).
  ModelParams* grads = nullptr;
  /// Record branch decisions (ReLU, max, hinge, floor) when non-null.
  std::vector<std::uint64_t>* decisions = nullptr;
  SigmaStats* sigma_stats = nullptr;
};

/// Forward (and optionally backward) pass of an objective over one batch.
/// `noise` is required for Objective::Full. Throws NumericError naming the
/// tensor when a loss or gradient becomes non-finite.
LossBreakdown evaluate_objective(Objective objective, const Batch& batch, const TripletSets& sets,
                                 std::span<const SequenceRecord> records, const ModelParams& params,
                                 const ModelConfig& config, const LossConfig& cfg, const NoiseDraw* noise,
                                 const ObjectiveOptions& options = {});

/// Analytic gradient of the objective; ε is drawn from `rng` and held fixed.
ModelParams loss_gradients(Objective objective, const Batch& batch, std::span<const SequenceRecord> records,
                           const ModelParams& params, const ModelConfig& config, const LossConfig& cfg, Rng& rng,
                           LossBreakdown* loss = nullptr);

}  // namespace pfl
