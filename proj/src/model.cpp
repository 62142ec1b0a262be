#include "pfl/model.hpp"

#include <atomic>
#include <cmath>
#include <string>

#include "pfl/error.hpp"

namespace pfl {

namespace {

std::atomic<std::uint64_t> g_uncertainty_evaluations{0};

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<Affine> affine_list(std::size_t n, std::size_t out, std::size_t in) {
  return std::vector<Affine>(n, Affine(out, in));
}

template <typename Params, typename Ref>
std::vector<Ref> collect(Params& p) {
  std::vector<Ref> out;
  auto add = [&](const std::string& name, ParamGroup group, auto& affine) {
    out.push_back(Ref{name + ".weight", group, affine.weight.rows(), affine.weight.cols(), affine.weight.data()});
    out.push_back(Ref{name + ".bias", group, affine.bias.size(), 1, {affine.bias.data(), affine.bias.size()}});
  };
  auto add_list = [&](const std::string& name, ParamGroup group, auto& list) {
    for (std::size_t i = 0; i < list.size(); ++i) add(name + "." + std::to_string(i), group, list[i]);
  };
  add("backbone", ParamGroup::Backbone, p.backbone);
  add_list("id_cvm", ParamGroup::IdentityCvm, p.id_cvm);
  add_list("id_ccm", ParamGroup::IdentityCcm, p.id_ccm);
  add("head_a", ParamGroup::Head, p.head_a);
  add("head_b", ParamGroup::Head, p.head_b);
  add_list("un_cvm", ParamGroup::UncertaintyCvm, p.un_cvm);
  add_list("un_ccm", ParamGroup::UncertaintyCcm, p.un_ccm);
  return out;
}

void init_affine(Affine& a, Rng& rng, double scale) {
  const double bound = scale / std::sqrt(static_cast<double>(a.weight.cols()));
  for (auto& w : a.weight.data()) w = rng.uniform(-bound, bound);
}

void check_affine(const Affine& a, std::size_t out, std::size_t in, const char* name) {
  if (a.weight.rows() != out || a.weight.cols() != in || a.bias.size() != out) {
    throw ShapeError(std::string("parameter ") + name + " has shape " + std::to_string(a.weight.rows()) + "x" +
                     std::to_string(a.weight.cols()) + ", expected " + std::to_string(out) + "x" +
                     std::to_string(in));
  }
}

// Residual second stage: x + ccm(x).
Vector residual(const Affine& ccm, std::span<const double> x) {
  Vector y = ccm.apply(x);
  axpy(1.0, x, y);
  return y;
}

std::uint64_t positive(double x) { return x > 0.0 ? 1 : 0; }

}  // namespace

void ModelConfig::validate() const {
  if (frame_dim == 0 || feature_dim == 0 || parts == 0 || embed_dim == 0 || head_hidden == 0) {
    throw ConfigError("model config: all dimensions must be >= 1");
  }
  if (feature_dim % parts != 0) {
    throw ConfigError("model config: feature_dim " + std::to_string(feature_dim) + " not divisible by parts " +
                      std::to_string(parts));
  }
}

const char* to_string(ParamGroup group) noexcept {
  switch (group) {
    case ParamGroup::Backbone: return "backbone";
    case ParamGroup::IdentityCvm: return "id_cvm";
    case ParamGroup::IdentityCcm: return "id_ccm";
    case ParamGroup::Head: return "head";
    case ParamGroup::UncertaintyCvm: return "un_cvm";
    case ParamGroup::UncertaintyCcm: return "un_ccm";
  }
  return "?";
}

ModelParams ModelParams::zeros(const ModelConfig& c) {
  c.validate();
  ModelParams p;
  p.backbone = Affine(c.feature_dim, c.frame_dim);
  p.id_cvm = affine_list(c.parts, c.embed_dim, c.part_dim());
  p.id_ccm = affine_list(c.parts, c.embed_dim, c.embed_dim);
  p.head_a = Affine(c.head_hidden, c.feature_dim);
  p.head_b = Affine(c.feature_dim, c.head_hidden);
  p.un_cvm = affine_list(c.parts, c.embed_dim, c.part_dim());
  p.un_ccm = affine_list(c.parts, c.embed_dim, c.embed_dim);
  return p;
}

std::vector<TensorRef> ModelParams::tensors() { return collect<ModelParams, TensorRef>(*this); }

std::vector<ConstTensorRef> ModelParams::tensors() const {
  return collect<const ModelParams, ConstTensorRef>(*this);
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.data.size();
  return n;
}

bool ModelParams::all_finite() const {
  for (const auto& t : tensors())
    if (!pfl::all_finite(t.data)) return false;
  return true;
}

void ModelParams::check_shapes(const ModelConfig& c) const {
  check_affine(backbone, c.feature_dim, c.frame_dim, "backbone");
  if (id_cvm.size() != c.parts || id_ccm.size() != c.parts || un_cvm.size() != c.parts ||
      un_ccm.size() != c.parts) {
    throw ShapeError("per-part parameter lists do not match parts = " + std::to_string(c.parts));
  }
  for (std::size_t p = 0; p < c.parts; ++p) {
    check_affine(id_cvm[p], c.embed_dim, c.part_dim(), "id_cvm");
    check_affine(id_ccm[p], c.embed_dim, c.embed_dim, "id_ccm");
    check_affine(un_cvm[p], c.embed_dim, c.part_dim(), "un_cvm");
    check_affine(un_ccm[p], c.embed_dim, c.embed_dim, "un_ccm");
  }
  check_affine(head_a, c.head_hidden, c.feature_dim, "head_a");
  check_affine(head_b, c.feature_dim, c.head_hidden, "head_b");
}

ModelParams initialize_params(const ModelConfig& config, Rng& rng) {
  ModelParams p = ModelParams::zeros(config);
  init_affine(p.backbone, rng, 1.0);
  for (auto& a : p.id_cvm) init_affine(a, rng, 1.0);
  for (auto& a : p.id_ccm) init_affine(a, rng, 0.1);
  init_affine(p.head_a, rng, 1.0);
  init_affine(p.head_b, rng, 1.0);
  for (auto& a : p.un_cvm) {
    init_affine(a, rng, 1.0);
    std::fill(a.bias.begin(), a.bias.end(), kSigmaBiasInit);
  }
  for (auto& a : p.un_ccm) init_affine(a, rng, 0.1);
  return p;
}

Vector flatten(const ModelParams& params) {
  Vector flat;
  flat.reserve(params.parameter_count());
  for (const auto& t : params.tensors()) flat.insert(flat.end(), t.data.begin(), t.data.end());
  return flat;
}

void unflatten(std::span<const double> flat, ModelParams& params) {
  std::size_t offset = 0;
  for (auto& t : params.tensors()) {
    if (offset + t.data.size() > flat.size()) throw ShapeError("unflatten: vector too short");
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.data.size(), t.data.begin());
    offset += t.data.size();
  }
  if (offset != flat.size()) throw ShapeError("unflatten: vector too long");
}

Vector backbone_forward(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config) {
  if (frames.empty()) throw InputError("backbone_forward: sequence has no frames");
  Vector pooled;
  for (const auto& frame : frames) {
    if (frame.size() != config.frame_dim) throw ShapeError("backbone_forward: frame length != frame_dim");
    Vector pre = params.backbone.apply(frame);
    if (pooled.empty()) {
      pooled = std::move(pre);
    } else {
      for (std::size_t j = 0; j < pooled.size(); ++j) pooled[j] = std::max(pooled[j], pre[j]);
    }
  }
  return relu(pooled);
}

PartVectors hpp_slice(std::span<const double> f, std::size_t parts) {
  if (parts == 0 || f.size() % parts != 0) {
    throw ShapeError("hpp_slice: length " + std::to_string(f.size()) + " not divisible into " +
                     std::to_string(parts) + " parts");
  }
  const std::size_t width = f.size() / parts;
  PartVectors out(parts);
  for (std::size_t p = 0; p < parts; ++p) out[p].assign(f.begin() + p * width, f.begin() + (p + 1) * width);
  return out;
}

IdentityOutput identity_branch(std::span<const double> f, const ModelParams& params, const ModelConfig& config) {
  if (f.size() != config.feature_dim) throw ShapeError("identity_branch: len(f) != feature_dim");
  const PartVectors sliced = hpp_slice(f, config.parts);
  IdentityOutput out;
  out.mu_v.reserve(config.parts);
  out.mu_c.reserve(config.parts);
  for (std::size_t p = 0; p < config.parts; ++p) {
    out.mu_v.push_back(params.id_cvm.at(p).apply(sliced[p]));
    out.mu_c.push_back(residual(params.id_ccm.at(p), out.mu_v.back()));
  }
  return out;
}

UncertaintyOutput uncertainty_branch(std::span<const double> f, const ModelParams& params,
                                     const ModelConfig& config) {
  if (f.size() != config.feature_dim) throw ShapeError("uncertainty_branch: len(f) != feature_dim");
  ++g_uncertainty_evaluations;
  Vector mid = params.head_a.apply(f);
  for (auto& v : mid) v = sigmoid(v);
  const PartVectors h_parts = hpp_slice(relu(params.head_b.apply(mid)), config.parts);
  UncertaintyOutput out;
  for (std::size_t p = 0; p < config.parts; ++p) {
    out.sigma_v.push_back(relu(params.un_cvm.at(p).apply(h_parts[p])));
    out.sigma_c.push_back(relu(residual(params.un_ccm.at(p), out.sigma_v.back())));
  }
  return out;
}

Vector reparam_with_noise(std::span<const double> mu, std::span<const double> sigma,
                          std::span<const double> epsilon) {
  if (mu.size() != sigma.size() || mu.size() != epsilon.size()) {
    throw InputError("reparam: mu, sigma and epsilon lengths differ");
  }
  Vector e(mu.size());
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (sigma[i] < 0.0) throw InputError("reparam: negative sigma");
    e[i] = mu[i] + epsilon[i] * sigma[i];
  }
  return e;
}

Vector reparam_sample(std::span<const double> mu, std::span<const double> sigma, Rng& rng) {
  if (mu.size() != sigma.size()) throw InputError("reparam_sample: mu and sigma lengths differ");
  if (mu.empty()) return {};
  const Vector eps = standard_normal(rng, mu.size());
  return reparam_with_noise(mu, sigma, eps);
}

PartVectors inference_embed(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config) {
  const Vector f = backbone_forward(frames, params, config);
  return identity_branch(f, params, config).mu_c;
}

std::uint64_t uncertainty_branch_evaluations() noexcept { return g_uncertainty_evaluations.load(); }

ForwardTrace trace_forward(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config,
                           bool with_uncertainty) {
  if (frames.empty()) throw InputError("trace_forward: sequence has no frames");
  ForwardTrace t;
  t.pooled.assign(config.feature_dim, 0.0);
  t.argmax.assign(config.feature_dim, 0);
  for (std::size_t fi = 0; fi < frames.size(); ++fi) {
    if (frames[fi].size() != config.frame_dim) throw ShapeError("trace_forward: frame length != frame_dim");
    const Vector pre = params.backbone.apply(frames[fi]);
    for (std::size_t j = 0; j < pre.size(); ++j) {
      if (fi == 0 || pre[j] > t.pooled[j]) {
        t.pooled[j] = pre[j];
        t.argmax[j] = static_cast<std::uint32_t>(fi);
      }
    }
  }
  t.f = relu(t.pooled);

  const PartVectors f_parts = hpp_slice(t.f, config.parts);
  for (std::size_t p = 0; p < config.parts; ++p) {
    t.mu_v.push_back(params.id_cvm[p].apply(f_parts[p]));
    t.mu_c.push_back(residual(params.id_ccm[p], t.mu_v.back()));
  }
  if (!with_uncertainty) return t;

  ++g_uncertainty_evaluations;
  t.has_uncertainty = true;
  t.head_pre = params.head_a.apply(t.f);
  t.head_mid.resize(t.head_pre.size());
  for (std::size_t i = 0; i < t.head_pre.size(); ++i) t.head_mid[i] = sigmoid(t.head_pre[i]);
  t.head_out_pre = params.head_b.apply(t.head_mid);
  t.h = relu(t.head_out_pre);
  const PartVectors h_parts = hpp_slice(t.h, config.parts);
  for (std::size_t p = 0; p < config.parts; ++p) {
    t.sigma_v_pre.push_back(params.un_cvm[p].apply(h_parts[p]));
    t.sigma_v.push_back(relu(t.sigma_v_pre.back()));
    t.sigma_c_pre.push_back(residual(params.un_ccm[p], t.sigma_v.back()));
    t.sigma_c.push_back(relu(t.sigma_c_pre.back()));
  }
  return t;
}

void backward(const ForwardTrace& t, std::span<const Vector> frames, const OutputGrads& up,
              const ModelParams& params, const ModelConfig& config, ModelParams& grads) {
  const std::size_t parts = config.parts;
  const std::size_t width = config.part_dim();
  Vector df(config.feature_dim, 0.0);
  const PartVectors f_parts = hpp_slice(t.f, parts);

  for (std::size_t p = 0; p < parts; ++p) {
    Vector dmu_v = up.mu_v.empty() ? Vector(config.embed_dim, 0.0) : up.mu_v[p];
    if (!up.mu_c.empty()) {
      const Vector& dmu_c = up.mu_c[p];
      add_outer(grads.id_ccm[p].weight, dmu_c, t.mu_v[p]);
      axpy(1.0, dmu_c, grads.id_ccm[p].bias);
      axpy(1.0, dmu_c, dmu_v);
      axpy(1.0, matvec_transposed(params.id_ccm[p].weight, dmu_c), dmu_v);
    }
    add_outer(grads.id_cvm[p].weight, dmu_v, f_parts[p]);
    axpy(1.0, dmu_v, grads.id_cvm[p].bias);
    const Vector dpart = matvec_transposed(params.id_cvm[p].weight, dmu_v);
    for (std::size_t i = 0; i < width; ++i) df[p * width + i] += dpart[i];
  }

  const bool sigma_grads = !up.sigma_v.empty() || !up.sigma_c.empty();
  if (t.has_uncertainty && sigma_grads) {
    Vector dh(config.feature_dim, 0.0);
    const PartVectors h_parts = hpp_slice(t.h, parts);
    for (std::size_t p = 0; p < parts; ++p) {
      Vector dsv = up.sigma_v.empty() ? Vector(config.embed_dim, 0.0) : up.sigma_v[p];
      if (!up.sigma_c.empty()) {
        Vector dsc_pre = up.sigma_c[p];
        for (std::size_t i = 0; i < dsc_pre.size(); ++i)
          if (!(t.sigma_c_pre[p][i] > 0.0)) dsc_pre[i] = 0.0;
        add_outer(grads.un_ccm[p].weight, dsc_pre, t.sigma_v[p]);
        axpy(1.0, dsc_pre, grads.un_ccm[p].bias);
        axpy(1.0, dsc_pre, dsv);
        axpy(1.0, matvec_transposed(params.un_ccm[p].weight, dsc_pre), dsv);
      }
      for (std::size_t i = 0; i < dsv.size(); ++i)
        if (!(t.sigma_v_pre[p][i] > 0.0)) dsv[i] = 0.0;
      add_outer(grads.un_cvm[p].weight, dsv, h_parts[p]);
      axpy(1.0, dsv, grads.un_cvm[p].bias);
      const Vector dpart = matvec_transposed(params.un_cvm[p].weight, dsv);
      for (std::size_t i = 0; i < width; ++i) dh[p * width + i] += dpart[i];
    }
    for (std::size_t i = 0; i < dh.size(); ++i)
      if (!(t.head_out_pre[i] > 0.0)) dh[i] = 0.0;
    add_outer(grads.head_b.weight, dh, t.head_mid);
    axpy(1.0, dh, grads.head_b.bias);
    Vector dmid = matvec_transposed(params.head_b.weight, dh);
    for (std::size_t i = 0; i < dmid.size(); ++i) dmid[i] *= t.head_mid[i] * (1.0 - t.head_mid[i]);
    add_outer(grads.head_a.weight, dmid, t.f);
    axpy(1.0, dmid, grads.head_a.bias);
    axpy(1.0, matvec_transposed(params.head_a.weight, dmid), df);
  }

  for (std::size_t j = 0; j < config.feature_dim; ++j) {
    if (!(t.pooled[j] > 0.0) || df[j] == 0.0) continue;
    axpy(df[j], frames[t.argmax[j]], grads.backbone.weight.row(j));
    grads.backbone.bias[j] += df[j];
  }
}

void append_decisions(const ForwardTrace& t, std::vector<std::uint64_t>& out) {
  for (std::size_t j = 0; j < t.pooled.size(); ++j) out.push_back((t.argmax[j] << 1) | positive(t.pooled[j]));
  if (!t.has_uncertainty) return;
  for (double v : t.head_out_pre) out.push_back(positive(v));
  for (const auto& part : t.sigma_v_pre)
    for (double v : part) out.push_back(positive(v));
  for (const auto& part : t.sigma_c_pre)
    for (double v : part) out.push_back(positive(v));
}

}  // namespace pfl
