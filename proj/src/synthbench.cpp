#include "pfl/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "pfl/error.hpp"
#include "pfl/json_io.hpp"

namespace pfl {

namespace {

// Fraction of the 2-D planes of the warp basis that rotate with view angle.
constexpr double kWarpedPlaneFraction = 0.5;

struct Plane {
  Vector q1;
  Vector q2;
  double rate;
};

struct IdentityTraits {
  Vector base;
  Vector cloth_shift;
  Vector bag_shift;
};

struct Block {
  std::size_t begin;
  std::size_t width;
};

// Gram–Schmidt on Gaussian columns.
std::vector<Vector> random_orthonormal_basis(std::size_t dim, Rng& rng) {
  std::vector<Vector> basis;
  while (basis.size() < dim) {
    Vector v = standard_normal(rng, dim);
    for (const auto& b : basis) axpy(-dot(v, b), b, v);
    const double n = norm(v);
    if (n < 1e-8) continue;
    for (auto& x : v) x /= n;
    basis.push_back(std::move(v));
  }
  return basis;
}

std::vector<Plane> make_warp_planes(const SynthConfig& c, Rng& rng) {
  const auto dim = static_cast<std::size_t>(c.frame_dim);
  const std::vector<Vector> basis = random_orthonormal_basis(dim, rng);
  const auto n_planes = static_cast<std::size_t>(std::floor(kWarpedPlaneFraction * static_cast<double>(dim / 2)));
  std::vector<Plane> planes;
  for (std::size_t j = 0; j < n_planes; ++j) {
    planes.push_back(Plane{basis[2 * j], basis[2 * j + 1], rng.uniform(0.5, 1.5)});
  }
  return planes;
}

Vector apply_view_warp(const std::vector<Plane>& planes, double strength, double view_deg, Vector x) {
  const double theta = strength * view_deg * std::numbers::pi / 180.0;
  for (const auto& plane : planes) {
    const double angle = theta * plane.rate;
    const double a = dot(x, plane.q1);
    const double b = dot(x, plane.q2);
    const double ra = std::cos(angle) * a - std::sin(angle) * b;
    const double rb = std::sin(angle) * a + std::cos(angle) * b;
    axpy(ra - a, plane.q1, x);
    axpy(rb - b, plane.q2, x);
  }
  return x;
}

std::size_t cloth_width(const SynthConfig& c) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(c.cloth_dims_fraction * c.frame_dim)));
}

// Positive shift on [begin, begin + width) with per-identity ±50% jitter per dim.
Vector block_shift(std::size_t dim, std::size_t begin, std::size_t width, double magnitude, Rng& rng) {
  Vector shift(dim, 0.0);
  for (std::size_t d = begin; d < begin + width && d < dim; ++d) {
    const double sign = (rng.next_u64() >> 63) ? 1.0 : -1.0;
    shift[d] = magnitude * (1.0 + 0.5 * sign);
  }
  return shift;
}

Block cloth_block(const SynthConfig& c) { return {0, cloth_width(c)}; }

Block bag_block(const SynthConfig& c) {
  const auto dim = static_cast<std::size_t>(c.frame_dim);
  const std::size_t width = cloth_width(c);
  return {dim > width ? (dim - width) / 2 : 0, width};
}

IdentityTraits make_identity(const SynthConfig& c, Rng& rng) {
  const auto dim = static_cast<std::size_t>(c.frame_dim);
  IdentityTraits t;
  t.base = standard_normal(rng, dim);
  const Block cloth = cloth_block(c);
  const Block bag = bag_block(c);
  t.cloth_shift = block_shift(dim, cloth.begin, cloth.width, c.cloth_shift_magnitude, rng);
  t.bag_shift = block_shift(dim, bag.begin, bag.width, 0.5 * c.cloth_shift_magnitude, rng);
  return t;
}

// Each CL/BG sequence wears its own variant of the identity's coat or bag.
void add_sequence_variation(Vector& center, Block block, double stddev, Rng& rng) {
  for (std::size_t d = block.begin; d < block.begin + block.width && d < center.size(); ++d) {
    center[d] += stddev * rng.normal();
  }
}

bool contains_view(const std::vector<double>& views, double v) {
  return std::find(views.begin(), views.end(), v) != views.end();
}

}  // namespace

const char* to_string(Condition c) noexcept {
  switch (c) {
    case Condition::NM: return "NM";
    case Condition::BG: return "BG";
    case Condition::CL: return "CL";
  }
  return "?";
}

const char* to_string(Subset s) noexcept {
  switch (s) {
    case Subset::Xv: return "Xv";
    case Subset::Xc: return "Xc";
    case Subset::Test: return "Test";
  }
  return "?";
}

Condition parse_condition(std::string_view text) {
  if (text == "NM") return Condition::NM;
  if (text == "BG") return Condition::BG;
  if (text == "CL") return Condition::CL;
  throw ParseError("unknown condition '" + std::string(text) + "'");
}

Subset parse_subset(std::string_view text) {
  if (text == "Xv") return Subset::Xv;
  if (text == "Xc") return Subset::Xc;
  if (text == "Test") return Subset::Test;
  throw ParseError("unknown subset '" + std::string(text) + "'");
}

int SynthConfig::n_xv_ids() const { return static_cast<int>(std::lround(xv_fraction * n_train_ids)); }

XcPlan plan_xc_counts(const SynthConfig& c) {
  const double xv_sequences =
      static_cast<double>(c.n_xv_ids()) * static_cast<double>(c.views.size()) * (c.xv_nm_per_view + c.xv_bg_per_view);
  const double slots = static_cast<double>(c.n_xc_ids()) * static_cast<double>(c.xc_views.size());
  XcPlan plan;
  plan.per_view = static_cast<int>(std::lround(xv_sequences / (c.target_ratio * slots)));
  plan.cl = plan.per_view / 2;
  plan.bg = (plan.per_view - plan.cl) / 3;
  plan.nm = plan.per_view - plan.cl - plan.bg;
  return plan;
}

void SynthConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("synth config: " + msg); };
  if (n_train_ids < 2) fail("n_train_ids must be >= 2");
  if (n_test_ids < 1) fail("n_test_ids must be >= 1");
  if (!(xv_fraction > 0.0 && xv_fraction < 1.0)) fail("xv_fraction must lie in (0, 1)");
  if (n_xv_ids() < 1 || n_xc_ids() < 1) fail("xv_fraction leaves an empty training subset");
  if (views.empty() || xc_views.empty()) fail("views and xc_views must be non-empty");
  if (std::set<double>(views.begin(), views.end()).size() != views.size()) fail("duplicate view");
  for (double v : xc_views)
    if (!contains_view(views, v)) fail("xc_views must be a subset of views");
  if (frames_per_seq < 1) fail("frames_per_seq must be >= 1");
  if (frame_dim < 2) fail("frame_dim must be >= 2");
  if (!(cloth_dims_fraction > 0.0 && cloth_dims_fraction < 1.0)) fail("cloth_dims_fraction must lie in (0, 1)");
  if (cloth_shift_magnitude < 0.0 || view_warp_strength < 0.0 || noise_std < 0.0 || accessory_variation < 0.0) {
    fail("negative magnitude");
  }
  if (!(target_ratio > 1.0)) fail("target_ratio must exceed 1");
  if (xv_nm_per_view < 1 || xv_bg_per_view < 0) fail("Xv needs >= 1 NM per view");
  if (test_nm_per_view < 1 || test_bg_per_view < 0 || test_cl_per_view < 0) fail("bad test counts");
  if (gallery_nm_per_view < 1 || gallery_nm_per_view > test_nm_per_view) {
    fail("gallery_nm_per_view must lie in [1, test_nm_per_view]");
  }
  const XcPlan plan = plan_xc_counts(*this);
  if (plan.nm < 1 || plan.cl < 1) {
    fail("target_ratio " + std::to_string(target_ratio) + " leaves fewer than 2 Xc sequences per view");
  }
  const double xv = static_cast<double>(n_xv_ids()) * static_cast<double>(views.size()) * (xv_nm_per_view + xv_bg_per_view);
  const double xc = static_cast<double>(n_xc_ids()) * static_cast<double>(xc_views.size()) * plan.per_view;
  if (std::abs(xv / xc / target_ratio - 1.0) > 0.05) {
    fail("achievable ratio " + std::to_string(xv / xc) + " misses target " + std::to_string(target_ratio) +
         " by more than 5%");
  }
}

DatasetSummary Dataset::summary() const {
  DatasetSummary s;
  std::map<std::string, std::set<int>> ids;
  for (const char* name : {"Xv", "Xc", "Test"}) {
    s.sequences[name] = 0;
    ids[name];
  }
  for (const auto& r : records) {
    ++s.sequences[to_string(r.subset)];
    ids[to_string(r.subset)].insert(r.identity);
  }
  for (const auto& [name, set] : ids) s.identities[name] = static_cast<int>(set.size());
  const int xc = s.sequences["Xc"];
  s.ratio = xc > 0 ? static_cast<double>(s.sequences["Xv"]) / xc : 0.0;
  return s;
}

std::vector<SequenceRecord> Dataset::subset(Subset s) const {
  std::vector<SequenceRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [s](const SequenceRecord& r) { return r.subset == s; });
  return out;
}

Dataset generate_benchmark(const SynthConfig& config, Rng& rng) {
  config.validate();
  const XcPlan plan = plan_xc_counts(config);
  const std::vector<Plane> planes = make_warp_planes(config, rng);

  Dataset ds;
  ds.config = config;
  int next_seq = 0;

  auto emit = [&](int id, const IdentityTraits& traits, Subset subset, double view, Condition cond, int count) {
    for (int i = 0; i < count; ++i) {
      Vector center = apply_view_warp(planes, config.view_warp_strength, view, traits.base);
      if (cond == Condition::CL) {
        axpy(1.0, traits.cloth_shift, center);
        add_sequence_variation(center, cloth_block(config),
                               config.accessory_variation * config.cloth_shift_magnitude, rng);
      }
      if (cond == Condition::BG) {
        axpy(1.0, traits.bag_shift, center);
        add_sequence_variation(center, bag_block(config),
                               0.5 * config.accessory_variation * config.cloth_shift_magnitude, rng);
      }
      SequenceRecord r{id, cond, view, subset, next_seq++, {}};
      r.frames.reserve(static_cast<std::size_t>(config.frames_per_seq));
      for (int f = 0; f < config.frames_per_seq; ++f) {
        Vector frame = center;
        for (auto& x : frame) x += config.noise_std * rng.normal();
        r.frames.push_back(std::move(frame));
      }
      ds.records.push_back(std::move(r));
    }
  };

  const int n_xv = config.n_xv_ids();
  const int n_train = config.n_train_ids;
  for (int id = 0; id < n_train + config.n_test_ids; ++id) {
    const IdentityTraits traits = make_identity(config, rng);
    if (id < n_xv) {
      for (double view : config.views) {
        emit(id, traits, Subset::Xv, view, Condition::NM, config.xv_nm_per_view);
        emit(id, traits, Subset::Xv, view, Condition::BG, config.xv_bg_per_view);
      }
    } else if (id < n_train) {
      for (double view : config.xc_views) {
        emit(id, traits, Subset::Xc, view, Condition::NM, plan.nm);
        emit(id, traits, Subset::Xc, view, Condition::BG, plan.bg);
        emit(id, traits, Subset::Xc, view, Condition::CL, plan.cl);
      }
    } else {
      for (double view : config.views) {
        emit(id, traits, Subset::Test, view, Condition::NM, config.test_nm_per_view);
        emit(id, traits, Subset::Test, view, Condition::BG, config.test_bg_per_view);
        emit(id, traits, Subset::Test, view, Condition::CL, config.test_cl_per_view);
      }
    }
  }
  return ds;
}

GalleryProbeSplit split_gallery_probe(const std::vector<SequenceRecord>& test_records, int gallery_nm_per_view) {
  GalleryProbeSplit split;
  for (Condition c : {Condition::NM, Condition::BG, Condition::CL}) split.probes[c];

  std::map<std::pair<int, double>, std::vector<const SequenceRecord*>> groups;
  for (const auto& r : test_records) groups[{r.identity, r.view}].push_back(&r);

  for (auto& [key, members] : groups) {
    std::sort(members.begin(), members.end(),
              [](const SequenceRecord* a, const SequenceRecord* b) { return a->seq_id < b->seq_id; });
    const bool has_nm = std::any_of(members.begin(), members.end(),
                                    [](const SequenceRecord* r) { return r->condition == Condition::NM; });
    if (!has_nm) {
      std::ostringstream msg;
      msg << "identity " << key.first << " has no NM sequence at view " << key.second << "; view excluded";
      split.warnings.push_back(msg.str());
      continue;
    }
    int taken = 0;
    for (const SequenceRecord* r : members) {
      if (r->condition == Condition::NM && taken < gallery_nm_per_view) {
        split.gallery.push_back(*r);
        ++taken;
      } else {
        split.probes[r->condition].push_back(*r);
      }
    }
  }
  for (const auto& [cond, list] : split.probes) {
    if (list.empty()) split.warnings.push_back(std::string(to_string(cond)) + " probe set is empty");
  }
  return split;
}

namespace {

Json summary_json(const DatasetSummary& s, std::size_t records) {
  return Json{{"sequences", s.sequences}, {"identities", s.identities}, {"ratio", s.ratio}, {"records", records}};
}

}  // namespace

void save_manifest(const Dataset& dataset, const std::filesystem::path& path) {
  std::string out;
  const Json header{{"format_version", kManifestFormatVersion},
                    {"synth_config", to_json(dataset.config)},
                    {"summary", summary_json(dataset.summary(), dataset.records.size())}};
  out += header.dump();
  out += '\n';
  for (const auto& r : dataset.records) {
    const Json line{{"id", r.identity},          {"condition", to_string(r.condition)},
                    {"view", r.view},            {"subset", to_string(r.subset)},
                    {"seq_id", r.seq_id},        {"frames", r.frames}};
    out += line.dump();
    out += '\n';
  }
  write_file_atomic(path, out);
}

Dataset load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open manifest " + path.string());

  Dataset ds;
  Json header_summary;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no) + ": ";
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::exception& e) {
      throw ParseError(where + "invalid JSON (" + e.what() + ")");
    }
    try {
      if (!have_header) {
        if (j.at("format_version").get<int>() != kManifestFormatVersion) {
          throw ParseError(where + "unsupported format_version");
        }
        ds.config = synth_config_from_json(j.at("synth_config"));
        header_summary = j.at("summary");
        have_header = true;
        continue;
      }
      SequenceRecord r;
      r.identity = j.at("id").get<int>();
      r.condition = parse_condition(j.at("condition").get<std::string>());
      r.view = j.at("view").get<double>();
      r.subset = parse_subset(j.at("subset").get<std::string>());
      r.seq_id = j.at("seq_id").get<int>();
      r.frames = j.at("frames").get<std::vector<Vector>>();
      if (r.frames.empty()) throw ParseError(where + "record has no frames");
      ds.records.push_back(std::move(r));
    } catch (const Json::exception& e) {
      throw ParseError(where + "malformed record (" + e.what() + ")");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      throw ParseError(msg.rfind(path.string(), 0) == 0 ? msg : where + msg);
    }
  }
  if (!have_header) throw ParseError(path.string() + ": missing header line");

  const Json recount = summary_json(ds.summary(), ds.records.size());
  if (recount != header_summary) {
    throw ParseError(path.string() + ": summary mismatch, header " + header_summary.dump() + " vs records " +
                     recount.dump());
  }
  return ds;
}

}  // namespace pfl
