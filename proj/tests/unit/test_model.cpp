#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pfl/error.hpp"
#include "pfl/model.hpp"

using namespace pfl;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.frame_dim = 5;
  c.feature_dim = 8;
  c.parts = 2;
  c.embed_dim = 3;
  c.head_hidden = 6;
  return c;
}

ModelParams random_params(const ModelConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  ModelParams p = ModelParams::zeros(c);
  for (auto& t : p.tensors())
    for (auto& x : t.data) x = rng.uniform(-1.0, 1.0);
  return p;
}

std::vector<Vector> random_frames(std::size_t n, std::size_t dim, Rng& rng) {
  std::vector<Vector> frames;
  for (std::size_t i = 0; i < n; ++i) frames.push_back(standard_normal(rng, dim));
  return frames;
}

// Straight-line oracle: explicit loops, no shared helpers.
double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Vector lin(const Affine& a, const Vector& x) {
  Vector y(a.bias);
  for (std::size_t r = 0; r < a.weight.rows(); ++r)
    for (std::size_t c = 0; c < a.weight.cols(); ++c) y[r] += a.weight(r, c) * x[c];
  return y;
}

Vector part_of(const Vector& f, std::size_t p, std::size_t width) {
  return Vector(f.begin() + static_cast<long>(p * width), f.begin() + static_cast<long>((p + 1) * width));
}

}  // namespace

TEST(ModelConfig, Validation) {
  ModelConfig c = small_config();
  EXPECT_NO_THROW(c.validate());
  c.feature_dim = 7;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small_config();
  c.embed_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Backbone, SingleFrameIsReluAffine) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 1);
  Rng rng(2);
  const auto frames = random_frames(1, c.frame_dim, rng);
  EXPECT_EQ(backbone_forward(frames, p, c), relu(p.backbone.apply(frames[0])));
}

TEST(Backbone, DuplicatedFramesMatchSingle) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 1);
  Rng rng(3);
  auto frames = random_frames(1, c.frame_dim, rng);
  const Vector one = backbone_forward(frames, p, c);
  frames.push_back(frames[0]);
  frames.push_back(frames[0]);
  EXPECT_EQ(backbone_forward(frames, p, c), one);
}

TEST(Backbone, SetInvarianceUnderShuffle) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 4);
  Rng rng(5);
  auto frames = random_frames(30, c.frame_dim, rng);
  const Vector f = backbone_forward(frames, p, c);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = frames.size() - 1; i > 0; --i) std::swap(frames[i], frames[rng.uniform_index(i + 1)]);
    ASSERT_EQ(backbone_forward(frames, p, c), f);
  }
}

TEST(Backbone, EmptyFramesThrow) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 1);
  EXPECT_THROW(backbone_forward(std::vector<Vector>{}, p, c), InputError);
}

TEST(Hpp, Examples) {
  EXPECT_EQ(hpp_slice(Vector{1, 2, 3, 4}, 1), (PartVectors{{1, 2, 3, 4}}));
  EXPECT_EQ(hpp_slice(Vector{1, 2, 3, 4}, 2), (PartVectors{{1, 2}, {3, 4}}));
  Vector f(64);
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<double>(i);
  const PartVectors parts = hpp_slice(f, 16);
  ASSERT_EQ(parts.size(), 16u);
  Vector joined;
  for (const auto& part : parts) {
    EXPECT_EQ(part.size(), 4u);
    joined.insert(joined.end(), part.begin(), part.end());
  }
  EXPECT_EQ(joined, f);
  EXPECT_THROW(hpp_slice(Vector{1, 2, 3}, 2), ShapeError);
}

TEST(IdentityBranch, ZeroCcmGivesResidualIdentity) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 7);
  for (auto& a : p.id_ccm) a = Affine(c.embed_dim, c.embed_dim);
  Rng rng(8);
  const IdentityOutput out = identity_branch(standard_normal(rng, c.feature_dim), p, c);
  EXPECT_EQ(out.mu_c, out.mu_v);
}

TEST(IdentityBranch, IdentityCvmReturnsRawParts) {
  ModelConfig c = small_config();
  c.embed_dim = c.part_dim();
  ModelParams p = random_params(c, 9);
  for (auto& a : p.id_cvm) {
    a = Affine(c.part_dim(), c.part_dim());
    a.weight = Matrix::identity(c.part_dim());
  }
  const Vector f{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(identity_branch(f, p, c).mu_v, hpp_slice(f, 2));
}

TEST(IdentityBranch, MatchesCompositionOracle) {
  const ModelConfig c = small_config();
  for (std::uint64_t seed = 10; seed < 15; ++seed) {
    const ModelParams p = random_params(c, seed);
    Rng rng(seed);
    const Vector f = standard_normal(rng, c.feature_dim);
    const IdentityOutput out = identity_branch(f, p, c);
    for (std::size_t k = 0; k < c.parts; ++k) {
      const Vector mv = lin(p.id_cvm[k], part_of(f, k, c.part_dim()));
      Vector mc = lin(p.id_ccm[k], mv);
      for (std::size_t i = 0; i < mc.size(); ++i) mc[i] += mv[i];
      for (std::size_t i = 0; i < mc.size(); ++i) {
        EXPECT_NEAR(out.mu_v[k][i], mv[i], 1e-12);
        EXPECT_NEAR(out.mu_c[k][i], mc[i], 1e-12);
      }
    }
  }
}

TEST(UncertaintyBranch, MatchesCompositionOracle) {
  const ModelConfig c = small_config();
  for (std::uint64_t seed = 20; seed < 25; ++seed) {
    const ModelParams p = random_params(c, seed);
    Rng rng(seed);
    const Vector f = standard_normal(rng, c.feature_dim);
    const UncertaintyOutput out = uncertainty_branch(f, p, c);
    Vector mid = lin(p.head_a, f);
    for (auto& x : mid) x = sig(x);
    Vector h = lin(p.head_b, mid);
    for (auto& x : h) x = std::max(0.0, x);
    for (std::size_t k = 0; k < c.parts; ++k) {
      Vector sv = lin(p.un_cvm[k], part_of(h, k, c.part_dim()));
      for (auto& x : sv) x = std::max(0.0, x);
      Vector sc = lin(p.un_ccm[k], sv);
      for (std::size_t i = 0; i < sc.size(); ++i) sc[i] = std::max(0.0, sc[i] + sv[i]);
      for (std::size_t i = 0; i < sc.size(); ++i) {
        EXPECT_NEAR(out.sigma_v[k][i], sv[i], 1e-12);
        EXPECT_NEAR(out.sigma_c[k][i], sc[i], 1e-12);
      }
    }
  }
}

TEST(UncertaintyBranch, ZeroCcmGivesResidualIdentity) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 30);
  for (auto& a : p.un_ccm) a = Affine(c.embed_dim, c.embed_dim);
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const UncertaintyOutput out = uncertainty_branch(standard_normal(rng, c.feature_dim), p, c);
    ASSERT_EQ(out.sigma_c, out.sigma_v);
  }
}

TEST(UncertaintyBranch, NonNegativeForRandomInputsAndParams) {
  const ModelConfig c = small_config();
  Rng rng(40);
  for (std::uint64_t seed = 40; seed < 90; ++seed) {
    const ModelParams p = random_params(c, seed);
    const UncertaintyOutput out = uncertainty_branch(standard_normal(rng, c.feature_dim), p, c);
    for (std::size_t k = 0; k < c.parts; ++k)
      for (std::size_t i = 0; i < c.embed_dim; ++i) {
        ASSERT_GE(out.sigma_v[k][i], 0.0);
        ASSERT_GE(out.sigma_c[k][i], 0.0);
      }
  }
}

TEST(Reparam, ZeroSigmaReturnsMu) {
  Rng rng(1);
  const Vector mu{0.3, -1.7, 4.0};
  EXPECT_EQ(reparam_sample(mu, Vector{0.0, 0.0, 0.0}, rng), mu);
}

TEST(Reparam, FixedNoiseFormula) {
  EXPECT_EQ(reparam_with_noise(Vector{1.0, 2.0}, Vector{0.5, 2.0}, Vector{2.0, -1.0}), (Vector{2.0, 0.0}));
}

TEST(Reparam, MonteCarloMeanAndStd) {
  const Vector mu{1.5, -2.0, 0.0};
  const Vector sigma{0.5, 2.0, 1.0};
  Rng rng(77);
  constexpr int n = 100000;
  Vector sum(3, 0.0), sq(3, 0.0);
  for (int i = 0; i < n; ++i) {
    const Vector e = reparam_sample(mu, sigma, rng);
    for (std::size_t j = 0; j < 3; ++j) {
      sum[j] += e[j];
      sq[j] += e[j] * e[j];
    }
  }
  for (std::size_t j = 0; j < 3; ++j) {
    const double mean = sum[j] / n;
    const double sd = std::sqrt((sq[j] - n * mean * mean) / (n - 1));
    EXPECT_LT(std::abs(mean - mu[j]), 3.0 * sigma[j] / std::sqrt(n)) << j;
    EXPECT_LT(std::abs(sd - sigma[j]), 0.02 * sigma[j]) << j;
  }
}

TEST(Reparam, DeterministicForSeed) {
  Rng a(5), b(5);
  EXPECT_EQ(reparam_sample(Vector{1, 2}, Vector{3, 4}, a), reparam_sample(Vector{1, 2}, Vector{3, 4}, b));
}

TEST(Reparam, Errors) {
  Rng rng(1);
  EXPECT_THROW(reparam_sample(Vector{1.0}, Vector{-0.1}, rng), InputError);
  EXPECT_THROW(reparam_sample(Vector{1.0, 2.0}, Vector{0.1}, rng), InputError);
}

TEST(InferenceEmbed, EqualsIdentityBranchMuC) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 50);
  Rng rng(51);
  const auto frames = random_frames(6, c.frame_dim, rng);
  EXPECT_EQ(inference_embed(frames, p, c), identity_branch(backbone_forward(frames, p, c), p, c).mu_c);
}

TEST(InferenceEmbed, NeverEvaluatesUncertaintyBranch) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 52);
  Rng rng(53);
  const auto frames = random_frames(6, c.frame_dim, rng);
  const auto before = uncertainty_branch_evaluations();
  (void)inference_embed(frames, p, c);
  EXPECT_EQ(uncertainty_branch_evaluations(), before);
  (void)uncertainty_branch(backbone_forward(frames, p, c), p, c);
  EXPECT_EQ(uncertainty_branch_evaluations(), before + 1);
}

TEST(InferenceEmbed, IndependentOfUncertaintyParams) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 54);
  ModelParams q = p;
  Rng rng(55);
  for (auto& t : q.tensors()) {
    if (t.group == ParamGroup::Head || t.group == ParamGroup::UncertaintyCvm ||
        t.group == ParamGroup::UncertaintyCcm) {
      for (auto& x : t.data) x = rng.uniform(-5.0, 5.0);
    }
  }
  const auto frames = random_frames(6, c.frame_dim, rng);
  EXPECT_EQ(inference_embed(frames, p, c), inference_embed(frames, q, c));
  for (auto& a : q.un_cvm) a = Affine(c.embed_dim, c.part_dim());
  EXPECT_EQ(inference_embed(frames, p, c), inference_embed(frames, q, c));
}

TEST(InferenceEmbed, IdenticalFramesIdenticalEmbeddings) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 56);
  Rng rng(57);
  const auto frames = random_frames(4, c.frame_dim, rng);
  const auto copy = frames;
  EXPECT_EQ(inference_embed(frames, p, c), inference_embed(copy, p, c));
}

TEST(Params, FlattenRoundTripAndShapes) {
  const ModelConfig c = small_config();
  const ModelParams p = random_params(c, 60);
  const Vector flat = flatten(p);
  EXPECT_EQ(flat.size(), p.parameter_count());
  ModelParams q = ModelParams::zeros(c);
  unflatten(flat, q);
  EXPECT_EQ(p, q);
  EXPECT_NO_THROW(p.check_shapes(c));
  ModelConfig other = c;
  other.embed_dim = 4;
  EXPECT_THROW(p.check_shapes(other), ShapeError);
}

TEST(Params, InitializationIsSeededAndFinite) {
  const ModelConfig c = small_config();
  Rng a(3), b(3);
  const ModelParams p = initialize_params(c, a);
  EXPECT_EQ(p, initialize_params(c, b));
  EXPECT_TRUE(p.all_finite());
  for (const auto& u : p.un_cvm)
    for (double x : u.bias) EXPECT_EQ(x, kSigmaBiasInit);
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.frame_dim));
  for (double x : p.backbone.weight.data()) EXPECT_LE(std::abs(x), bound);
}

TEST(Params, AllFiniteDetectsNan) {
  const ModelConfig c = small_config();
  ModelParams p = random_params(c, 61);
  p.un_ccm[1].bias[0] = std::nan("");
  EXPECT_FALSE(p.all_finite());
}
