#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pfl/losses.hpp"
#include "pfl/model.hpp"
#include "pfl/synthbench.hpp"
#include "pfl/trainer.hpp"

namespace pfl {

struct ConditionSigma {
  double sigma_v_mean = 0.0;
  double sigma_c_mean = 0.0;
  int sequences = 0;
};

struct SigmaReport {
  std::map<Condition, ConditionSigma> per_condition;
  /// Mean σ_c of each HPP part over all sequences and channels.
  std::vector<double> per_part_sigma_c;
  std::vector<std::string> warnings;
};

/// Evaluates the uncertainty branch on every record and averages σ over
/// sequences, parts and channels. `trained_phase` other than Full adds a
/// warning that the branch was never trained.
SigmaReport sigma_statistics(const std::vector<SequenceRecord>& records, const ModelParams& params,
                             const ModelConfig& config, Objective trained_phase = Objective::Full);

struct SigmaTrajectory {
  std::vector<std::pair<int, double>> series;  // (iter, mean σ_c)
  double first_decile_mean = 0.0;
  double last_decile_mean = 0.0;
};

/// Uses rows carrying σ_c; the deciles span ceil(n/10) rows at each end.
/// Throws ParseError when no row has σ_c.
SigmaTrajectory sigma_trajectory(const std::vector<MetricsRow>& log);

struct PartSvd {
  double s1 = 0.0;
  Vector spectrum;
  /// ‖W − W1‖_F / ‖W‖_F
  double reconstruction_error = 0.0;
  /// √(Σ_{i≥2} sᵢ²) / √(Σ sᵢ²)
  double tail_ratio = 0.0;
  /// |cos(v1, d)| with d the NM→CL centerline of the part.
  double alignment = 0.0;
};

struct CcmSvdReport {
  std::vector<PartSvd> parts;
};

/// Per part: normalized mean over identities of (CL centroid − NM centroid)
/// of μ_v. Throws AnalysisError when no identity has both NM and CL records.
std::vector<Vector> nm_to_cl_directions(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                        const ModelConfig& config);

/// SVD of each identity-branch CCM weight against the NM→CL centerline.
CcmSvdReport ccm_svd_analysis(const ModelParams& params, const std::vector<SequenceRecord>& records,
                              const ModelConfig& config);

std::string sigma_report_json(const SigmaReport& report);
std::string sigma_parts_csv(const SigmaReport& report);
std::string trajectory_csv(const SigmaTrajectory& trajectory);
std::string trajectory_json(const SigmaTrajectory& trajectory);
std::string ccm_svd_json(const CcmSvdReport& report);
std::string ccm_svd_csv(const CcmSvdReport& report);

}  // namespace pfl
