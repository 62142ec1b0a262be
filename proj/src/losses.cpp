#include "pfl/losses.hpp"

#include <cmath>

#include "pfl/error.hpp"

namespace pfl {

namespace {

// Per-entry inputs of one triplet term. An empty `sigma` selects the normal
// (σ-free) loss.
struct TermInput {
  std::vector<const PartVectors*> x;
  std::vector<const PartVectors*> sigma;
};

struct TermGrads {
  std::vector<PartVectors>* dx = nullptr;
  std::vector<PartVectors>* dsigma = nullptr;
};

struct TermResult {
  double value = 0.0;
  std::vector<double> per_part;  // value / S per part
};

double mean_square(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return dot(v, v) / static_cast<double>(v.size());
}

// Pairwise quantity Q(a, b) whose difference drives the hinge.
double pair_value(const TermInput& in, SigmaReduction reduction, std::size_t a, std::size_t b, std::size_t part,
                  std::span<const double> s) {
  const Vector& xa = (*in.x[a])[part];
  const Vector& xb = (*in.x[b])[part];
  if (in.sigma.empty()) return squared_distance(xa, xb);
  if (reduction == SigmaReduction::ChannelMean) {
    return squared_distance(xa, xb) / std::max(s[a] + s[b], kDenominatorFloor);
  }
  const Vector& sa = (*in.sigma[a])[part];
  const Vector& sb = (*in.sigma[b])[part];
  double q = 0.0;
  for (std::size_t c = 0; c < xa.size(); ++c) {
    const double d = xa[c] - xb[c];
    q += d * d / std::max(sa[c] * sa[c] + sb[c] * sb[c], kDenominatorFloor);
  }
  return q;
}

// Adds coef · ∂Q(a,b)/∂(x, σ) into the gradient buffers.
void pair_backward(const TermInput& in, SigmaReduction reduction, std::size_t a, std::size_t b, std::size_t part,
                   std::span<const double> s, double coef, TermGrads& g) {
  const Vector& xa = (*in.x[a])[part];
  const Vector& xb = (*in.x[b])[part];
  Vector& dxa = (*g.dx)[a][part];
  Vector& dxb = (*g.dx)[b][part];
  const std::size_t dim = xa.size();

  if (in.sigma.empty() || reduction == SigmaReduction::ChannelMean) {
    double scale = 2.0 * coef;
    double den = 1.0;
    if (!in.sigma.empty()) {
      den = std::max(s[a] + s[b], kDenominatorFloor);
      scale /= den;
    }
    for (std::size_t c = 0; c < dim; ++c) {
      const double d = scale * (xa[c] - xb[c]);
      dxa[c] += d;
      dxb[c] -= d;
    }
    if (in.sigma.empty() || s[a] + s[b] <= kDenominatorFloor || g.dsigma == nullptr) return;
    // ∂Q/∂s = −‖Δ‖²/den², and ∂s/∂σ_c = 2σ_c / dim.
    const double ds = -coef * squared_distance(xa, xb) / (den * den);
    for (std::size_t e : {a, b}) {
      const Vector& sig = (*in.sigma[e])[part];
      Vector& dsig = (*g.dsigma)[e][part];
      for (std::size_t c = 0; c < dim; ++c) dsig[c] += ds * 2.0 * sig[c] / static_cast<double>(dim);
    }
    return;
  }

  const Vector& sa = (*in.sigma[a])[part];
  const Vector& sb = (*in.sigma[b])[part];
  for (std::size_t c = 0; c < dim; ++c) {
    const double d = xa[c] - xb[c];
    const double raw = sa[c] * sa[c] + sb[c] * sb[c];
    const double den = std::max(raw, kDenominatorFloor);
    dxa[c] += 2.0 * coef * d / den;
    dxb[c] -= 2.0 * coef * d / den;
    if (raw <= kDenominatorFloor || g.dsigma == nullptr) continue;
    const double ds = -coef * d * d / (den * den);
    (*g.dsigma)[a][part][c] += ds * 2.0 * sa[c];
    (*g.dsigma)[b][part][c] += ds * 2.0 * sb[c];
  }
}

TermResult triplet_term(std::span<const Triplet> triplets, const TermInput& in, const LossConfig& cfg,
                        double weight, TermGrads* grads, std::vector<std::uint64_t>* decisions) {
  TermResult result;
  const std::size_t n = in.x.size();
  if (triplets.empty() || n == 0) return result;
  const std::size_t parts = in.x.front()->size();
  result.per_part.assign(parts, 0.0);
  const double inv_count = 1.0 / static_cast<double>(triplets.size());
  const double inv_parts = 1.0 / static_cast<double>(parts);

  std::vector<double> q(n * n, 0.0);
  std::vector<double> coef(n * n, 0.0);
  std::vector<double> s(in.sigma.empty() ? 0 : n, 0.0);
  auto idx = [n](std::size_t a, std::size_t b) { return a < b ? a * n + b : b * n + a; };

  for (std::size_t part = 0; part < parts; ++part) {
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = mean_square((*in.sigma[i])[part]);
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) q[a * n + b] = pair_value(in, cfg.sigma_reduction, a, b, part, s);
    if (decisions && !in.sigma.empty()) {
      for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) {
          if (cfg.sigma_reduction == SigmaReduction::ChannelMean) {
            decisions->push_back(s[a] + s[b] > kDenominatorFloor ? 1 : 0);
          } else {
            const Vector& sa = (*in.sigma[a])[part];
            const Vector& sb = (*in.sigma[b])[part];
            for (std::size_t c = 0; c < sa.size(); ++c)
              decisions->push_back(sa[c] * sa[c] + sb[c] * sb[c] > kDenominatorFloor ? 1 : 0);
          }
        }
    }

    std::fill(coef.begin(), coef.end(), 0.0);
    double sum = 0.0;
    for (const auto& [a, p, ng] : triplets) {
      const double v = q[idx(a, p)] - q[idx(a, ng)] + cfg.margin;
      const bool active = v > 0.0;
      if (decisions) decisions->push_back(active ? 1 : 0);
      if (!active) continue;
      sum += v;
      coef[idx(a, p)] += 1.0;
      coef[idx(a, ng)] -= 1.0;
    }
    result.per_part[part] = sum * inv_count * inv_parts;
    result.value += result.per_part[part];

    if (grads == nullptr) continue;
    const double scale = weight * inv_count * inv_parts;
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const double c = coef[a * n + b];
        if (c != 0.0) pair_backward(in, cfg.sigma_reduction, a, b, part, s, c * scale, *grads);
      }
  }
  return result;
}

void check_embeddings(const std::vector<PartVectors>& list, bool is_sigma, const char* what) {
  for (const auto& parts : list)
    for (const auto& v : parts) {
      if (!all_finite(v)) throw NumericError(std::string("non-finite value in ") + what);
      if (is_sigma)
        for (double x : v)
          if (x < 0.0) throw InputError(std::string("negative sigma in ") + what);
    }
}

TermInput pointers(const std::vector<PartVectors>& x, const std::vector<PartVectors>* sigma) {
  TermInput in;
  for (const auto& v : x) in.x.push_back(&v);
  if (sigma)
    for (const auto& v : *sigma) in.sigma.push_back(&v);
  return in;
}

std::vector<PartVectors> zeros_like(const std::vector<PartVectors>& shape) {
  std::vector<PartVectors> out = shape;
  for (auto& parts : out)
    for (auto& v : parts) std::fill(v.begin(), v.end(), 0.0);
  return out;
}

struct TermSpec {
  const std::vector<Triplet>* triplets;
  const std::vector<PartVectors>* x;
  const std::vector<PartVectors>* sigma;
  std::vector<PartVectors>* dx;
  std::vector<PartVectors>* dsigma;
  std::optional<double>* out;
  const char* name;
};

}  // namespace

void LossConfig::validate() const {
  if (!(margin > 0.0)) throw ConfigError("loss config: margin must be positive");
}

const char* to_string(Objective o) noexcept {
  switch (o) {
    case Objective::IdentityOnly: return "identity_only";
    case Objective::Full: return "full";
    case Objective::Baseline: return "baseline";
  }
  return "?";
}

double triplet_loss_normal(std::span<const Triplet> triplets, const std::vector<PartVectors>& embeddings,
                           const LossConfig& cfg) {
  check_embeddings(embeddings, false, "embeddings");
  return triplet_term(triplets, pointers(embeddings, nullptr), cfg, 1.0, nullptr, nullptr).value;
}

double triplet_loss_uncertainty(std::span<const Triplet> triplets, const std::vector<PartVectors>& mu,
                                const std::vector<PartVectors>& sigma, const LossConfig& cfg) {
  check_embeddings(mu, false, "mu");
  check_embeddings(sigma, true, "sigma");
  if (mu.size() != sigma.size()) throw ShapeError("triplet_loss_uncertainty: mu and sigma entry counts differ");
  return triplet_term(triplets, pointers(mu, &sigma), cfg, 1.0, nullptr, nullptr).value;
}

LossBreakdown total_loss(const TripletSets& sets, std::vector<ProgressiveEmbedding>& embeddings,
                         const LossConfig& cfg, Rng& rng) {
  std::vector<PartVectors> mu_v, mu_c, sigma_v, sigma_c, e_v, e_c;
  for (auto& emb : embeddings) {
    if (emb.e_v.empty())
      for (std::size_t p = 0; p < emb.mu_v.size(); ++p) emb.e_v.push_back(reparam_sample(emb.mu_v[p], emb.sigma_v[p], rng));
    if (emb.e_c.empty())
      for (std::size_t p = 0; p < emb.mu_c.size(); ++p) emb.e_c.push_back(reparam_sample(emb.mu_c[p], emb.sigma_c[p], rng));
    mu_v.push_back(emb.mu_v);
    mu_c.push_back(emb.mu_c);
    sigma_v.push_back(emb.sigma_v);
    sigma_c.push_back(emb.sigma_c);
    e_v.push_back(emb.e_v);
    e_c.push_back(emb.e_c);
  }
  check_embeddings(sigma_v, true, "sigma_v");
  check_embeddings(sigma_c, true, "sigma_c");

  LossBreakdown out;
  const TermSpec specs[] = {
      {&sets.t_v, &mu_v, &sigma_v, nullptr, nullptr, &out.l_tv, "L_tv"},
      {&sets.t_c, &mu_c, &sigma_c, nullptr, nullptr, &out.l_tc, "L_tc"},
      {&sets.t_v, &e_v, &sigma_v, nullptr, nullptr, &out.l_tv_e, "L_tv_e"},
      {&sets.t_c, &e_c, &sigma_c, nullptr, nullptr, &out.l_tc_e, "L_tc_e"},
  };
  int defined = 0;
  std::vector<TermResult> results;
  for (const auto& spec : specs) {
    if (spec.triplets->empty()) {
      out.flags.push_back(std::string(spec.name) + ": empty triplet set, term skipped");
      continue;
    }
    results.push_back(triplet_term(*spec.triplets, pointers(*spec.x, spec.sigma), cfg, 1.0, nullptr, nullptr));
    *spec.out = results.back().value;
    ++defined;
  }
  if (defined == 0) return out;
  out.per_part.assign(results.front().per_part.size(), 0.0);
  for (const auto& r : results) {
    out.total += r.value / defined;
    for (std::size_t p = 0; p < r.per_part.size(); ++p) out.per_part[p] += r.per_part[p] / defined;
  }
  if (!std::isfinite(out.total)) throw NumericError("total_loss: non-finite total");
  return out;
}

NoiseDraw draw_noise(std::size_t entries, const ModelConfig& config, Rng& rng) {
  NoiseDraw noise;
  for (std::size_t i = 0; i < entries; ++i) {
    PartVectors v, c;
    for (std::size_t p = 0; p < config.parts; ++p) v.push_back(standard_normal(rng, config.embed_dim));
    for (std::size_t p = 0; p < config.parts; ++p) c.push_back(standard_normal(rng, config.embed_dim));
    noise.eps_v.push_back(std::move(v));
    noise.eps_c.push_back(std::move(c));
  }
  return noise;
}

LossBreakdown evaluate_objective(Objective objective, const Batch& batch, const TripletSets& sets,
                                 std::span<const SequenceRecord> records, const ModelParams& params,
                                 const ModelConfig& config, const LossConfig& cfg, const NoiseDraw* noise,
                                 const ObjectiveOptions& options) {
  const bool full = objective == Objective::Full;
  const std::size_t n = batch.entries.size();
  if (full && (noise == nullptr || noise->eps_v.size() != n || noise->eps_c.size() != n)) {
    throw InputError("evaluate_objective: full objective needs one noise draw per batch entry");
  }

  std::vector<ForwardTrace> traces;
  traces.reserve(n);
  std::vector<PartVectors> mu_v, mu_c, sigma_v, sigma_c, e_v, e_c;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& frames = records[batch.entries[i].record].frames;
    traces.push_back(trace_forward(frames, params, config, full));
    const ForwardTrace& t = traces.back();
    if (options.decisions) append_decisions(t, *options.decisions);
    mu_v.push_back(t.mu_v);
    mu_c.push_back(t.mu_c);
    if (!full) continue;
    sigma_v.push_back(t.sigma_v);
    sigma_c.push_back(t.sigma_c);
    PartVectors ev, ec;
    for (std::size_t p = 0; p < config.parts; ++p) {
      ev.push_back(reparam_with_noise(t.mu_v[p], t.sigma_v[p], noise->eps_v[i][p]));
      ec.push_back(reparam_with_noise(t.mu_c[p], t.sigma_c[p], noise->eps_c[i][p]));
    }
    e_v.push_back(std::move(ev));
    e_c.push_back(std::move(ec));
  }

  const bool want_grads = options.grads != nullptr;
  std::vector<PartVectors> d_mu_v, d_mu_c, d_sv, d_sc, d_ev, d_ec;
  if (want_grads) {
    d_mu_v = zeros_like(mu_v);
    d_mu_c = zeros_like(mu_c);
    if (full) {
      d_sv = zeros_like(sigma_v);
      d_sc = zeros_like(sigma_c);
      d_ev = zeros_like(e_v);
      d_ec = zeros_like(e_c);
    }
  }

  LossBreakdown out;
  std::vector<TermSpec> specs;
  switch (objective) {
    case Objective::IdentityOnly:
      specs.push_back({&sets.t_v, &mu_v, nullptr, &d_mu_v, nullptr, &out.l_tv, "L_tv"});
      specs.push_back({&sets.t_c, &mu_c, nullptr, &d_mu_c, nullptr, &out.l_tc, "L_tc"});
      break;
    case Objective::Full:
      specs.push_back({&sets.t_v, &mu_v, &sigma_v, &d_mu_v, &d_sv, &out.l_tv, "L_tv"});
      specs.push_back({&sets.t_c, &mu_c, &sigma_c, &d_mu_c, &d_sc, &out.l_tc, "L_tc"});
      specs.push_back({&sets.t_v, &e_v, &sigma_v, &d_ev, &d_sv, &out.l_tv_e, "L_tv_e"});
      specs.push_back({&sets.t_c, &e_c, &sigma_c, &d_ec, &d_sc, &out.l_tc_e, "L_tc_e"});
      break;
    case Objective::Baseline:
      specs.push_back({&sets.t_c, &mu_c, nullptr, &d_mu_c, nullptr, &out.l_tc, "L_tc"});
      break;
  }

  std::size_t defined = 0;
  for (const auto& spec : specs) {
    if (spec.triplets->empty()) {
      out.flags.push_back(std::string(spec.name) + ": empty triplet set, term skipped");
    } else {
      ++defined;
    }
  }
  if (defined == 0) return out;
  const double weight = 1.0 / static_cast<double>(defined);

  for (const auto& spec : specs) {
    if (spec.triplets->empty()) continue;
    TermGrads g{spec.dx, spec.dsigma};
    const TermResult r = triplet_term(*spec.triplets, pointers(*spec.x, spec.sigma), cfg, weight,
                                      want_grads ? &g : nullptr, options.decisions);
    if (!std::isfinite(r.value)) throw NumericError(std::string("non-finite loss term ") + spec.name);
    *spec.out = r.value;
    out.total += weight * r.value;
    if (out.per_part.empty()) out.per_part.assign(r.per_part.size(), 0.0);
    for (std::size_t p = 0; p < r.per_part.size(); ++p) out.per_part[p] += weight * r.per_part[p];
  }

  if (full && options.sigma_stats) {
    double sv = 0.0, sc = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < config.parts; ++p)
        for (std::size_t c = 0; c < config.embed_dim; ++c) {
          sv += sigma_v[i][p][c];
          sc += sigma_c[i][p][c];
          ++count;
        }
    options.sigma_stats->sigma_v_mean = sv / static_cast<double>(count);
    options.sigma_stats->sigma_c_mean = sc / static_cast<double>(count);
  }

  if (!want_grads) return out;

  // e = μ + ε ⊙ σ with ε constant.
  if (full) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t p = 0; p < config.parts; ++p)
        for (std::size_t c = 0; c < config.embed_dim; ++c) {
          d_mu_v[i][p][c] += d_ev[i][p][c];
          d_sv[i][p][c] += d_ev[i][p][c] * noise->eps_v[i][p][c];
          d_mu_c[i][p][c] += d_ec[i][p][c];
          d_sc[i][p][c] += d_ec[i][p][c] * noise->eps_c[i][p][c];
        }
  }
  for (std::size_t i = 0; i < n; ++i) {
    OutputGrads up;
    up.mu_v = d_mu_v[i];
    up.mu_c = d_mu_c[i];
    if (full) {
      up.sigma_v = d_sv[i];
      up.sigma_c = d_sc[i];
    }
    backward(traces[i], records[batch.entries[i].record].frames, up, params, config, *options.grads);
  }
  for (const auto& t : options.grads->tensors()) {
    if (!all_finite(t.data)) throw NumericError("non-finite gradient in " + t.name);
  }
  return out;
}

ModelParams loss_gradients(Objective objective, const Batch& batch, std::span<const SequenceRecord> records,
                           const ModelParams& params, const ModelConfig& config, const LossConfig& cfg, Rng& rng,
                           LossBreakdown* loss) {
  const TripletSets sets = build_triplet_sets(batch);
  NoiseDraw noise;
  if (objective == Objective::Full) noise = draw_noise(batch.entries.size(), config, rng);
  ModelParams grads = ModelParams::zeros(config);
  ObjectiveOptions options;
  options.grads = &grads;
  LossBreakdown l = evaluate_objective(objective, batch, sets, records, params, config, cfg, &noise, options);
  if (loss) *loss = std::move(l);
  return grads;
}

}  // namespace pfl
