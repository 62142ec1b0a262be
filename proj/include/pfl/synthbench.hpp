#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pfl/matrix.hpp"
#include "pfl/rng.hpp"

namespace pfl {

enum class Condition { NM, BG, CL };
/// Xv: cross-view training subset. Xc: cross-cloth training subset.
enum class Subset { Xv, Xc, Test };

const char* to_string(Condition c) noexcept;
const char* to_string(Subset s) noexcept;
Condition parse_condition(std::string_view text);
Subset parse_subset(std::string_view text);

struct SequenceRecord {
  int identity = 0;
  Condition condition = Condition::NM;
  double view = 0.0;  // degrees
  Subset subset = Subset::Test;
  int seq_id = 0;
  std::vector<Vector> frames;

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

struct SynthConfig {
  int n_train_ids = 60;
  int n_test_ids = 20;
  double xv_fraction = 44.0 / 60.0;
  std::vector<double> views{0, 18, 36, 54, 72, 90, 108, 126};
  std::vector<double> xc_views{0, 18};
  int frames_per_seq = 12;
  int frame_dim = 32;
  double cloth_shift_magnitude = 1.5;
  /// Per-sequence coat/bag variation, as a fraction of the shift magnitude.
  double accessory_variation = 0.5;
  double cloth_dims_fraction = 0.25;
  double view_warp_strength = 0.5;
  double noise_std = 0.3;
  double target_ratio = 3.0;

  // Per-(identity, view) sequence counts.
  int xv_nm_per_view = 2;
  int xv_bg_per_view = 1;
  int test_nm_per_view = 2;
  int test_bg_per_view = 1;
  int test_cl_per_view = 2;
  /// Leading NM sequences per (identity, view) that form the gallery.
  int gallery_nm_per_view = 1;

  [[nodiscard]] int n_xv_ids() const;
  [[nodiscard]] int n_xc_ids() const { return n_train_ids - n_xv_ids(); }
  /// Throws ConfigError on a violated invariant or an unreachable ratio.
  void validate() const;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;
};

struct DatasetSummary {
  std::map<std::string, int> sequences;   // per subset
  std::map<std::string, int> identities;  // per subset
  double ratio = 0.0;                     // Xv : Xc sequences

  friend bool operator==(const DatasetSummary&, const DatasetSummary&) = default;
};

struct Dataset {
  SynthConfig config;
  std::vector<SequenceRecord> records;

  [[nodiscard]] DatasetSummary summary() const;
  [[nodiscard]] std::vector<SequenceRecord> subset(Subset s) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Number of sequences per (identity, view) in Xc and their NM/BG/CL split.
struct XcPlan {
  int per_view = 0;
  int nm = 0;
  int bg = 0;
  int cl = 0;
};
XcPlan plan_xc_counts(const SynthConfig& config);

/// Builds the three-principle benchmark:
///   Xv: all views, NM/BG only;  Xc: xc_views only, NM/BG/CL;
///   disjoint identities; Xv:Xc sequence ratio near target_ratio;
///   Test: fresh identities, every view and condition.
Dataset generate_benchmark(const SynthConfig& config, Rng& rng);

struct GalleryProbeSplit {
  std::vector<SequenceRecord> gallery;
  std::map<Condition, std::vector<SequenceRecord>> probes;
  std::vector<std::string> warnings;
};

/// First `gallery_nm_per_view` NM sequences (by seq_id) of every
/// (identity, view) go to the gallery; the rest become condition-keyed probes.
GalleryProbeSplit split_gallery_probe(const std::vector<SequenceRecord>& test_records, int gallery_nm_per_view = 1);

inline constexpr int kManifestFormatVersion = 1;

/// Line-delimited JSON: a header line, then one record per line.
void save_manifest(const Dataset& dataset, const std::filesystem::path& path);
/// Throws ParseError with the offending line number.
Dataset load_manifest(const std::filesystem::path& path);

}  // namespace pfl
