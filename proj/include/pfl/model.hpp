#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pfl/matrix.hpp"
#include "pfl/rng.hpp"

namespace pfl {

/// Per-part list of vectors; index = HPP part.
using PartVectors = std::vector<Vector>;

struct ModelConfig {
  std::size_t frame_dim = 32;
  std::size_t feature_dim = 64;
  /// HPP scale S.
  std::size_t parts = 16;
  /// Output width of every per-part CVM/CCM.
  std::size_t embed_dim = 8;
  /// Hidden width of the uncertainty Head.
  std::size_t head_hidden = 32;

  [[nodiscard]] std::size_t part_dim() const noexcept { return parts ? feature_dim / parts : 0; }
  /// Throws ConfigError on a violated invariant.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Affine {
  Matrix weight;
  Vector bias;

  Affine() = default;
  Affine(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}

  [[nodiscard]] Vector apply(std::span<const double> x) const { return affine(weight, bias, x); }
  friend bool operator==(const Affine&, const Affine&) = default;
};

enum class ParamGroup { Backbone, IdentityCvm, IdentityCcm, Head, UncertaintyCvm, UncertaintyCcm };

const char* to_string(ParamGroup group) noexcept;

template <typename T>
struct BasicTensorRef {
  std::string name;
  ParamGroup group;
  std::size_t rows;
  std::size_t cols;
  std::span<T> data;
};
using TensorRef = BasicTensorRef<double>;
using ConstTensorRef = BasicTensorRef<const double>;

/// Every learnable tensor of the network. Gradients share this type.
struct ModelParams {
  Affine backbone;
  std::vector<Affine> id_cvm;
  std::vector<Affine> id_ccm;
  Affine head_a;
  Affine head_b;
  std::vector<Affine> un_cvm;
  std::vector<Affine> un_ccm;

  /// All tensors zero, shaped for `config`.
  static ModelParams zeros(const ModelConfig& config);

  /// Stable enumeration: name order is the checkpoint and flattening order.
  [[nodiscard]] std::vector<TensorRef> tensors();
  [[nodiscard]] std::vector<ConstTensorRef> tensors() const;

  [[nodiscard]] std::size_t parameter_count() const;
  [[nodiscard]] bool all_finite() const;
  /// Throws ShapeError if any tensor disagrees with `config`.
  void check_shapes(const ModelConfig& config) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Initial unCVM bias: σ ≈ √0.5 so that s_a + s_b ≈ 1 at the start of phase 2.
inline constexpr double kSigmaBiasInit = 0.70710678118654752;

/// Weights uniform in ±1/√fan_in, CCM weights scaled by 0.1, biases zero
/// except unCVM (kSigmaBiasInit).
ModelParams initialize_params(const ModelConfig& config, Rng& rng);

/// Flatten in tensors() order, and the inverse.
Vector flatten(const ModelParams& params);
void unflatten(std::span<const double> flat, ModelParams& params);

struct ProgressiveEmbedding {
  PartVectors mu_v;
  PartVectors mu_c;
  PartVectors sigma_v;
  PartVectors sigma_c;
  PartVectors e_v;
  PartVectors e_c;
};

struct IdentityOutput {
  PartVectors mu_v;
  PartVectors mu_c;
};

struct UncertaintyOutput {
  PartVectors sigma_v;
  PartVectors sigma_c;
};

/// relu(max over frames of backbone(frame)). Throws InputError on no frames.
Vector backbone_forward(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config);

/// Contiguous split of f into `parts` equal slices. Throws ShapeError when
/// the length is not divisible.
PartVectors hpp_slice(std::span<const double> f, std::size_t parts);

IdentityOutput identity_branch(std::span<const double> f, const ModelParams& params, const ModelConfig& config);
UncertaintyOutput uncertainty_branch(std::span<const double> f, const ModelParams& params,
                                     const ModelConfig& config);

/// e = mu + ε ⊙ sigma with fresh ε ~ N(0, I). Throws InputError on negative
/// sigma or mismatched lengths.
Vector reparam_sample(std::span<const double> mu, std::span<const double> sigma, Rng& rng);
/// Deterministic form with caller-supplied ε.
Vector reparam_with_noise(std::span<const double> mu, std::span<const double> sigma,
                          std::span<const double> epsilon);

/// μ_c of the identity branch; the uncertainty branch is not evaluated.
PartVectors inference_embed(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config);

/// Number of uncertainty-branch evaluations since process start.
std::uint64_t uncertainty_branch_evaluations() noexcept;

/// Intermediate activations of one sequence, retained for backprop.
struct ForwardTrace {
  Vector pooled;                       // max over frames, before ReLU
  std::vector<std::uint32_t> argmax;   // winning frame per feature channel
  Vector f;
  PartVectors mu_v;
  PartVectors mu_c;
  bool has_uncertainty = false;
  Vector head_pre;   // headA(f)
  Vector head_mid;   // sigmoid(head_pre)
  Vector head_out_pre;
  Vector h;
  PartVectors sigma_v_pre;
  PartVectors sigma_v;
  PartVectors sigma_c_pre;
  PartVectors sigma_c;
};

ForwardTrace trace_forward(std::span<const Vector> frames, const ModelParams& params, const ModelConfig& config,
                           bool with_uncertainty);

/// Upstream gradients w.r.t. the branch outputs. Empty lists mean zero.
struct OutputGrads {
  PartVectors mu_v;
  PartVectors mu_c;
  PartVectors sigma_v;
  PartVectors sigma_c;
};

/// Accumulates d(loss)/d(params) into `grads` for one traced sequence.
/// ReLU and max subgradients at a tie use the lowest index / zero.
void backward(const ForwardTrace& trace, std::span<const Vector> frames, const OutputGrads& upstream,
              const ModelParams& params, const ModelConfig& config, ModelParams& grads);

/// Appends every branch decision (argmax, ReLU signs) of the trace, so two
/// traces can be compared for a change of linear region.
void append_decisions(const ForwardTrace& trace, std::vector<std::uint64_t>& out);

}  // namespace pfl
