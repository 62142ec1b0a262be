#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pfl/rng.hpp"
#include "pfl/synthbench.hpp"

namespace pfl {

/// p identities × k sequences per batch.
struct BatchSpec {
  int p = 8;
  int k = 8;

  /// p ≥ 4, k ≥ 2, both even. Throws ConfigError.
  void validate() const;
  friend bool operator==(const BatchSpec&, const BatchSpec&) = default;
};

struct BatchEntry {
  std::size_t record = 0;  // index into the dataset's record list
  int identity = 0;
  int seq_id = 0;
  Condition condition = Condition::NM;
  Subset subset = Subset::Xv;

  friend bool operator==(const BatchEntry&, const BatchEntry&) = default;
};

struct Batch {
  std::vector<BatchEntry> entries;  // sorted by (identity, seq_id)
  std::vector<std::string> warnings;
};

/// Progressive-aware batch: p/2 Xv identities with k sequences each, and
/// p/2 Xc identities with k/2 NM + k/2 CL each. Identities short of
/// sequences are sampled with replacement and reported in `warnings`.
/// Throws SamplingError naming the subset that cannot supply p/2 identities.
Batch sample_batch(const Dataset& dataset, const BatchSpec& spec, Rng& rng);

/// Conventional PK batch over every training identity regardless of subset,
/// k sequences of any condition each. Used by the one-stage baseline.
Batch sample_uniform_batch(const Dataset& dataset, const BatchSpec& spec, Rng& rng);

/// Indices into Batch::entries.
using Triplet = std::array<std::size_t, 3>;

struct TripletSets {
  std::vector<Triplet> t_v;  // all three members from Xv identities
  std::vector<Triplet> t_c;  // whole batch
};

/// Batch-all enumeration in lexicographic (anchor, positive, negative) order.
TripletSets build_triplet_sets(const Batch& batch);

/// Σ_ids n_id (n_id − 1)(N − n_id), the size of a batch-all triplet set.
std::size_t batch_all_count(std::span<const int> labels);

}  // namespace pfl
