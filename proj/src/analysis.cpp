#include "pfl/analysis.hpp"

#include <cmath>
#include <set>

#include <fmt/format.h>

#include "pfl/error.hpp"
#include "pfl/json_io.hpp"
#include "pfl/linalg.hpp"

namespace pfl {

namespace {

double mean_of(const PartVectors& parts) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : parts) {
    for (double x : v) sum += x;
    n += v.size();
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

SigmaReport sigma_statistics(const std::vector<SequenceRecord>& records, const ModelParams& params,
                             const ModelConfig& config, Objective trained_phase) {
  SigmaReport report;
  if (trained_phase != Objective::Full) {
    report.warnings.push_back(fmt::format("uncertainty branch was not trained (checkpoint phase {}); sigma values "
                                          "reflect initialization",
                                          to_string(trained_phase)));
  }
  std::map<Condition, std::pair<double, double>> sums;
  report.per_part_sigma_c.assign(config.parts, 0.0);
  for (const auto& r : records) {
    const Vector f = backbone_forward(r.frames, params, config);
    const UncertaintyOutput u = uncertainty_branch(f, params, config);
    auto& [sv, sc] = sums[r.condition];
    sv += mean_of(u.sigma_v);
    sc += mean_of(u.sigma_c);
    ++report.per_condition[r.condition].sequences;
    for (std::size_t p = 0; p < config.parts; ++p) {
      double s = 0.0;
      for (double x : u.sigma_c[p]) s += x;
      report.per_part_sigma_c[p] += s / static_cast<double>(config.embed_dim);
    }
  }
  for (auto& [condition, stats] : report.per_condition) {
    stats.sigma_v_mean = sums[condition].first / stats.sequences;
    stats.sigma_c_mean = sums[condition].second / stats.sequences;
  }
  if (!records.empty()) {
    for (auto& v : report.per_part_sigma_c) v /= static_cast<double>(records.size());
  } else {
    report.warnings.push_back("no records supplied");
  }
  return report;
}

SigmaTrajectory sigma_trajectory(const std::vector<MetricsRow>& log) {
  SigmaTrajectory t;
  for (const auto& row : log)
    if (row.sigma_c_mean) t.series.emplace_back(row.iter, *row.sigma_c_mean);
  if (t.series.empty()) throw ParseError("sigma_trajectory: log has no sigma_c_mean values");
  const std::size_t n = t.series.size();
  const std::size_t decile = (n + 9) / 10;
  for (std::size_t i = 0; i < decile; ++i) {
    t.first_decile_mean += t.series[i].second;
    t.last_decile_mean += t.series[n - decile + i].second;
  }
  t.first_decile_mean /= static_cast<double>(decile);
  t.last_decile_mean /= static_cast<double>(decile);
  return t;
}

std::vector<Vector> nm_to_cl_directions(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                        const ModelConfig& config) {
  struct Centroids {
    std::vector<Vector> nm, cl;
    int n_nm = 0, n_cl = 0;
  };
  std::map<int, Centroids> per_id;
  for (const auto& r : records) {
    if (r.condition == Condition::BG) continue;
    const Vector f = backbone_forward(r.frames, params, config);
    const PartVectors mu_v = identity_branch(f, params, config).mu_v;
    Centroids& c = per_id[r.identity];
    auto& target = r.condition == Condition::NM ? c.nm : c.cl;
    (r.condition == Condition::NM ? c.n_nm : c.n_cl) += 1;
    if (target.empty()) target.assign(config.parts, Vector(config.embed_dim, 0.0));
    for (std::size_t p = 0; p < config.parts; ++p) axpy(1.0, mu_v[p], target[p]);
  }

  std::vector<Vector> direction(config.parts, Vector(config.embed_dim, 0.0));
  int used = 0;
  for (const auto& [id, c] : per_id) {
    if (c.n_nm == 0 || c.n_cl == 0) continue;
    ++used;
    for (std::size_t p = 0; p < config.parts; ++p) {
      axpy(1.0 / c.n_cl, c.cl[p], direction[p]);
      axpy(-1.0 / c.n_nm, c.nm[p], direction[p]);
    }
  }
  if (used == 0) throw AnalysisError("no identity has both NM and CL sequences");
  for (auto& d : direction) {
    const double n = norm(d);
    if (n == 0.0) throw AnalysisError("NM and CL centroids coincide; centerline undefined");
    for (auto& x : d) x /= n;
  }
  return direction;
}

CcmSvdReport ccm_svd_analysis(const ModelParams& params, const std::vector<SequenceRecord>& records,
                              const ModelConfig& config) {
  const std::vector<Vector> directions = nm_to_cl_directions(records, params, config);
  CcmSvdReport report;
  for (std::size_t p = 0; p < config.parts; ++p) {
    const Matrix& w = params.id_ccm[p].weight;
    const Svd full = svd(w);
    const Rank1 r1 = svd_rank1(w);
    PartSvd part;
    part.s1 = r1.s1;
    part.spectrum = full.singular_values;
    const double w_norm = w.frobenius_norm();
    part.reconstruction_error = w_norm > 0.0 ? subtract(w, r1.reconstruction).frobenius_norm() / w_norm : 0.0;
    double total = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < full.singular_values.size(); ++i) {
      const double s2 = full.singular_values[i] * full.singular_values[i];
      total += s2;
      if (i > 0) tail += s2;
    }
    part.tail_ratio = total > 0.0 ? std::sqrt(tail) / std::sqrt(total) : 0.0;
    part.alignment = std::min(1.0, std::abs(dot(r1.v1, directions[p])));
    report.parts.push_back(std::move(part));
  }
  return report;
}

std::string sigma_report_json(const SigmaReport& report) {
  Json conditions = Json::object();
  for (const auto& [c, s] : report.per_condition) {
    conditions[to_string(c)] = Json{{"sigma_v_mean", s.sigma_v_mean}, {"sigma_c_mean", s.sigma_c_mean},
                                    {"sequences", s.sequences}};
  }
  return Json{{"per_condition", conditions}, {"per_part_sigma_c", report.per_part_sigma_c},
              {"warnings", report.warnings}}
             .dump(2) +
         "\n";
}

std::string sigma_parts_csv(const SigmaReport& report) {
  std::string out = "part,sigma_c_mean\n";
  for (std::size_t p = 0; p < report.per_part_sigma_c.size(); ++p) {
    out += fmt::format("{},{}\n", p, report.per_part_sigma_c[p]);
  }
  return out;
}

std::string trajectory_csv(const SigmaTrajectory& t) {
  std::string out = "iter,sigma_c_mean\n";
  for (const auto& [iter, v] : t.series) out += fmt::format("{},{}\n", iter, v);
  return out;
}

std::string trajectory_json(const SigmaTrajectory& t) {
  return Json{{"points", t.series.size()}, {"first_decile_mean", t.first_decile_mean},
              {"last_decile_mean", t.last_decile_mean}}
             .dump(2) +
         "\n";
}

std::string ccm_svd_json(const CcmSvdReport& report) {
  Json parts = Json::array();
  for (const auto& p : report.parts) {
    parts.push_back(Json{{"s1", p.s1},
                         {"spectrum", p.spectrum},
                         {"reconstruction_error", p.reconstruction_error},
                         {"tail_ratio", p.tail_ratio},
                         {"alignment", p.alignment}});
  }
  return Json{{"parts", parts}}.dump(2) + "\n";
}

std::string ccm_svd_csv(const CcmSvdReport& report) {
  std::string out = "part,s1,reconstruction_error,tail_ratio,alignment\n";
  for (std::size_t i = 0; i < report.parts.size(); ++i) {
    const auto& p = report.parts[i];
    out += fmt::format("{},{},{},{},{}\n", i, p.s1, p.reconstruction_error, p.tail_ratio, p.alignment);
  }
  return out;
}

}  // namespace pfl
