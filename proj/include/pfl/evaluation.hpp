#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pfl/model.hpp"
#include "pfl/synthbench.hpp"

namespace pfl {

struct EmbeddedSequence {
  int identity = 0;
  int seq_id = 0;
  double view = 0.0;
  Condition condition = Condition::NM;
  PartVectors embedding;
};

/// inference_embed per record, aligned with the input order.
std::vector<PartVectors> embed_all(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                   const ModelConfig& config);
std::vector<EmbeddedSequence> embed_records(const std::vector<SequenceRecord>& records, const ModelParams& params,
                                            const ModelConfig& config);

/// Σ over parts of the Euclidean (non-squared) distance. Throws ShapeError.
double part_distance(const PartVectors& a, const PartVectors& b);

struct ViewCell {
  double probe_view = 0.0;
  int correct = 0;
  int total = 0;
  [[nodiscard]] double accuracy() const { return total ? static_cast<double>(correct) / total : 0.0; }
};

struct ConditionReport {
  std::vector<ViewCell> cells;    // probe views with at least one counted probe
  std::optional<double> average;  // mean of the cell accuracies
  int counted = 0;
  int skipped = 0;
};

/// One line per counted probe: which gallery entry it matched.
struct MatchAudit {
  Condition condition = Condition::NM;
  int probe_seq = 0;
  double probe_view = 0.0;
  int gallery_seq = 0;
  double gallery_view = 0.0;
  bool correct = false;
};

struct EvalReport {
  std::map<Condition, ConditionReport> conditions;
  std::vector<MatchAudit> audit;
  std::vector<std::string> warnings;
};

/// Rank-1 identification. Each probe takes the identity of its nearest
/// gallery entry (ties to the lowest gallery seq_id); with
/// `exclude_identical_view` only gallery entries at other views are
/// candidates. Probes without candidates are skipped and not counted.
EvalReport rank1(const std::vector<EmbeddedSequence>& gallery,
                 const std::map<Condition, std::vector<EmbeddedSequence>>& probes, bool exclude_identical_view);

/// condition,probe_view,accuracy,n_probes
std::string report_csv(const EvalReport& report);
/// {condition: average, ...} plus counts.
std::string report_summary_json(const EvalReport& report);

}  // namespace pfl
