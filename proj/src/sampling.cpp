#include "pfl/sampling.hpp"

#include <algorithm>
#include <map>

#include "pfl/error.hpp"

namespace pfl {

namespace {

struct IdentityPool {
  Subset subset = Subset::Xv;
  std::vector<std::size_t> all;
  std::vector<std::size_t> nm;
  std::vector<std::size_t> cl;
};

std::map<int, IdentityPool> index_training(const Dataset& dataset) {
  std::map<int, IdentityPool> pools;
  for (std::size_t i = 0; i < dataset.records.size(); ++i) {
    const auto& r = dataset.records[i];
    if (r.subset == Subset::Test) continue;
    auto& pool = pools[r.identity];
    pool.subset = r.subset;
    pool.all.push_back(i);
    if (r.condition == Condition::NM) pool.nm.push_back(i);
    if (r.condition == Condition::CL) pool.cl.push_back(i);
  }
  return pools;
}

// First `count` items of a partial Fisher–Yates shuffle.
template <typename T>
std::vector<T> choose_without_replacement(std::vector<T> items, std::size_t count, Rng& rng) {
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.uniform_index(items.size() - i);
    std::swap(items[i], items[j]);
  }
  items.resize(count);
  return items;
}

void draw_sequences(const std::vector<std::size_t>& pool, std::size_t count, int identity, const char* what,
                    Rng& rng, std::vector<std::size_t>& out, std::vector<std::string>& warnings) {
  if (pool.empty()) {
    throw SamplingError("identity " + std::to_string(identity) + " has no " + what + " sequences");
  }
  if (pool.size() >= count) {
    const auto chosen = choose_without_replacement(pool, count, rng);
    out.insert(out.end(), chosen.begin(), chosen.end());
    return;
  }
  warnings.push_back("identity " + std::to_string(identity) + " has " + std::to_string(pool.size()) + " " + what +
                     " sequences, sampling " + std::to_string(count) + " with replacement");
  for (std::size_t i = 0; i < count; ++i) out.push_back(pool[rng.uniform_index(pool.size())]);
}

Batch assemble(const Dataset& dataset, const std::vector<std::size_t>& picked, std::vector<std::string> warnings) {
  Batch batch;
  batch.warnings = std::move(warnings);
  for (std::size_t idx : picked) {
    const auto& r = dataset.records[idx];
    batch.entries.push_back(BatchEntry{idx, r.identity, r.seq_id, r.condition, r.subset});
  }
  std::stable_sort(batch.entries.begin(), batch.entries.end(), [](const BatchEntry& a, const BatchEntry& b) {
    return a.identity != b.identity ? a.identity < b.identity : a.seq_id < b.seq_id;
  });
  return batch;
}

}  // namespace

void BatchSpec::validate() const {
  if (p < 4 || k < 2 || p % 2 != 0 || k % 2 != 0) {
    throw ConfigError("batch spec (" + std::to_string(p) + "," + std::to_string(k) +
                      ") must have even p >= 4 and even k >= 2");
  }
}

Batch sample_batch(const Dataset& dataset, const BatchSpec& spec, Rng& rng) {
  spec.validate();
  const auto pools = index_training(dataset);
  std::vector<int> xv_ids;
  std::vector<int> xc_ids;
  for (const auto& [id, pool] : pools) {
    if (pool.subset == Subset::Xv) xv_ids.push_back(id);
    // An Xc identity is only usable if it has both NM and CL sequences.
    if (pool.subset == Subset::Xc && !pool.nm.empty() && !pool.cl.empty()) xc_ids.push_back(id);
  }
  const auto half = static_cast<std::size_t>(spec.p / 2);
  if (xv_ids.size() < half) {
    throw SamplingError("subset Xv has " + std::to_string(xv_ids.size()) + " identities, batch needs " +
                        std::to_string(half));
  }
  if (xc_ids.size() < half) {
    throw SamplingError("subset Xc has " + std::to_string(xc_ids.size()) +
                        " identities with NM and CL sequences, batch needs " + std::to_string(half));
  }

  std::vector<std::size_t> picked;
  std::vector<std::string> warnings;
  const auto k = static_cast<std::size_t>(spec.k);
  for (int id : choose_without_replacement(xv_ids, half, rng)) {
    draw_sequences(pools.at(id).all, k, id, "Xv", rng, picked, warnings);
  }
  for (int id : choose_without_replacement(xc_ids, half, rng)) {
    draw_sequences(pools.at(id).nm, k / 2, id, "NM", rng, picked, warnings);
    draw_sequences(pools.at(id).cl, k / 2, id, "CL", rng, picked, warnings);
  }
  return assemble(dataset, picked, std::move(warnings));
}

Batch sample_uniform_batch(const Dataset& dataset, const BatchSpec& spec, Rng& rng) {
  spec.validate();
  const auto pools = index_training(dataset);
  std::vector<int> ids;
  for (const auto& [id, pool] : pools) ids.push_back(id);
  const auto p = static_cast<std::size_t>(spec.p);
  if (ids.size() < p) {
    throw SamplingError("training set has " + std::to_string(ids.size()) + " identities, batch needs " +
                        std::to_string(p));
  }
  std::vector<std::size_t> picked;
  std::vector<std::string> warnings;
  for (int id : choose_without_replacement(ids, p, rng)) {
    draw_sequences(pools.at(id).all, static_cast<std::size_t>(spec.k), id, "training", rng, picked, warnings);
  }
  return assemble(dataset, picked, std::move(warnings));
}

TripletSets build_triplet_sets(const Batch& batch) {
  TripletSets sets;
  const auto& e = batch.entries;
  const std::size_t n = e.size();
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t p = 0; p < n; ++p) {
      if (p == a || e[p].identity != e[a].identity) continue;
      for (std::size_t q = 0; q < n; ++q) {
        if (e[q].identity == e[a].identity) continue;
        sets.t_c.push_back({a, p, q});
        if (e[a].subset == Subset::Xv && e[p].subset == Subset::Xv && e[q].subset == Subset::Xv) {
          sets.t_v.push_back({a, p, q});
        }
      }
    }
  }
  return sets;
}

std::size_t batch_all_count(std::span<const int> labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels) ++counts[l];
  std::size_t total = 0;
  for (const auto& [label, c] : counts) total += c * (c - 1) * (labels.size() - c);
  return total;
}

}  // namespace pfl
