#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "pfl/losses.hpp"
#include "pfl/model.hpp"

namespace pfl {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  /// Random configurations under the full objective.
  int configs = 20;
  /// Extra configurations covering phase 1, the baseline and elementwise σ.
  bool include_variants = true;
  double step = 1e-5;
  double tolerance = 1e-4;
  /// A coordinate is skipped when moving it by this much changes any
  /// ReLU/max/hinge/floor decision.
  double kink_radius = 1e-3;
  /// Applied to each analytic gradient before comparison (fault injection).
  std::function<void(ModelParams&)> perturb_gradient;
};

struct CoordinateError {
  int config = 0;
  std::string tensor;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GroupSummary {
  double max_rel_error = 0.0;
  int checked = 0;
  int excluded = 0;
};

struct GradcheckReport {
  bool passed = false;
  double max_rel_error = 0.0;
  int configs_run = 0;
  std::map<std::string, GroupSummary> groups;  // keyed by parameter group
  std::vector<CoordinateError> worst;          // largest errors first
  double seconds = 0.0;
};

inline constexpr double kRelativeFloor = 1e-6;

/// |a − n| / max(|a|, |n|, floor). The check uses floor = 1e-6·max(1, |L|),
/// the scale of finite-difference roundoff for a loss of size L.
double relative_error(double analytic, double numeric, double floor = kRelativeFloor);

/// Compares loss_gradients against central finite differences on random
/// small models (S = 2, widths ≤ 4, batch p = 4, k = 2).
GradcheckReport run_gradcheck(const GradcheckOptions& options);

std::string format_gradcheck(const GradcheckReport& report);

}  // namespace pfl
