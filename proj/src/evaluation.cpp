#include "pfl/evaluation.hpp"

#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "pfl/error.hpp"
#include "pfl/json_io.hpp"

namespace pfl {

std::vector<PartVectors> embed_all(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                   const ModelConfig& config) {
  std::vector<PartVectors> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(inference_embed(r.frames, params, config));
  return out;
}

std::vector<EmbeddedSequence> embed_records(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                            const ModelConfig& config) {
  std::vector<EmbeddedSequence> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    out.push_back({r.identity, r.seq_id, r.view, r.condition, inference_embed(r.frames, params, config)});
  }
  return out;
}

double part_distance(const PartVectors& a, const PartVectors& b) {
  if (a.size() != b.size()) throw ShapeError("part_distance: part counts differ");
  double total = 0.0;
  for (std::size_t p = 0; p < a.size(); ++p) total += std::sqrt(squared_distance(a[p], b[p]));
  return total;
}

EvalReport rank1(const std::vector<EmbeddedSequence>& gallery,
                 const std::map<Condition, std::vector<EmbeddedSequence>>& probes, bool exclude_identical_view) {
  EvalReport report;
  for (const auto& [condition, list] : probes) {
    ConditionReport& cr = report.conditions[condition];
    std::map<double, ViewCell> cells;
    for (const auto& probe : list) {
      const EmbeddedSequence* best = nullptr;
      double best_distance = std::numeric_limits<double>::infinity();
      for (const auto& g : gallery) {
        if (exclude_identical_view && g.view == probe.view) continue;
        const double d = part_distance(probe.embedding, g.embedding);
        if (best == nullptr || d < best_distance || (d == best_distance && g.seq_id < best->seq_id)) {
          best = &g;
          best_distance = d;
        }
      }
      if (best == nullptr) {
        ++cr.skipped;
        continue;
      }
      const bool correct = best->identity == probe.identity;
      ViewCell& cell = cells[probe.view];
      cell.probe_view = probe.view;
      cell.total += 1;
      cell.correct += correct ? 1 : 0;
      ++cr.counted;
      report.audit.push_back({condition, probe.seq_id, probe.view, best->seq_id, best->view, correct});
    }
    for (const auto& [view, cell] : cells) cr.cells.push_back(cell);
    if (!cr.cells.empty()) {
      double sum = 0.0;
      for (const auto& c : cr.cells) sum += c.accuracy();
      cr.average = sum / static_cast<double>(cr.cells.size());
    }
    if (cr.skipped > 0) {
      report.warnings.push_back(fmt::format("{}: {} probes skipped for lack of gallery candidates",
                                            to_string(condition), cr.skipped));
    }
    if (list.empty()) report.warnings.push_back(fmt::format("{}: no probes", to_string(condition)));
  }
  return report;
}

std::string report_csv(const EvalReport& report) {
  std::string out = "condition,probe_view,accuracy,n_probes\n";
  for (const auto& [condition, cr] : report.conditions) {
    for (const auto& cell : cr.cells) {
      out += fmt::format("{},{},{},{}\n", to_string(condition), cell.probe_view, cell.accuracy(), cell.total);
    }
  }
  return out;
}

std::string report_summary_json(const EvalReport& report) {
  Json averages = Json::object();
  Json counts = Json::object();
  for (const auto& [condition, cr] : report.conditions) {
    averages[to_string(condition)] = cr.average ? Json(*cr.average) : Json(nullptr);
    counts[to_string(condition)] = Json{{"counted", cr.counted}, {"skipped", cr.skipped}};
  }
  return Json{{"average", averages}, {"counts", counts}, {"warnings", report.warnings}}.dump(2) + "\n";
}

}  // namespace pfl
