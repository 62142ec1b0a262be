#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "pfl/error.hpp"
#include "pfl/losses.hpp"

using namespace pfl;

namespace {

std::vector<PartVectors> random_embeddings(std::size_t n, std::size_t parts, std::size_t dim, Rng& rng) {
  std::vector<PartVectors> out(n);
  for (auto& e : out)
    for (std::size_t k = 0; k < parts; ++k) e.push_back(standard_normal(rng, dim));
  return out;
}

std::vector<PartVectors> constant_sigma(std::size_t n, std::size_t parts, std::size_t dim, double value) {
  return std::vector<PartVectors>(n, PartVectors(parts, Vector(dim, value)));
}

std::vector<Triplet> random_triplets(std::size_t n, std::size_t count, Rng& rng) {
  std::vector<Triplet> t;
  for (std::size_t i = 0; i < count; ++i) t.push_back({rng.uniform_index(n), rng.uniform_index(n), rng.uniform_index(n)});
  return t;
}

// Independent formula: explicit loops, no library helpers.
double oracle_uncertainty(const std::vector<Triplet>& t, const std::vector<PartVectors>& mu,
                          const std::vector<PartVectors>& sigma, double m) {
  const std::size_t parts = mu[0].size();
  double total = 0.0;
  for (std::size_t k = 0; k < parts; ++k) {
    double part = 0.0;
    for (const auto& [a, p, n] : t) {
      auto sq = [&](std::size_t i, std::size_t j) {
        double d = 0.0;
        for (std::size_t c = 0; c < mu[i][k].size(); ++c) d += (mu[i][k][c] - mu[j][k][c]) * (mu[i][k][c] - mu[j][k][c]);
        return d;
      };
      auto s = [&](std::size_t i) {
        double v = 0.0;
        for (double x : sigma[i][k]) v += x * x;
        return v / static_cast<double>(sigma[i][k].size());
      };
      const double dp = std::max(s(a) + s(p), 1e-6);
      const double dn = std::max(s(a) + s(n), 1e-6);
      part += std::max(0.0, sq(a, p) / dp - sq(a, n) / dn + m);
    }
    total += part / static_cast<double>(t.size());
  }
  return total / static_cast<double>(parts);
}

}  // namespace

TEST(NormalLoss, IdenticalEmbeddingsGiveMargin) {
  const std::vector<PartVectors> e(3, PartVectors(2, Vector{1.0, 2.0}));
  const std::vector<Triplet> t{{0, 1, 2}, {1, 0, 2}};
  LossConfig cfg;
  cfg.margin = 0.7;
  EXPECT_DOUBLE_EQ(triplet_loss_normal(t, e, cfg), 0.7);
}

TEST(NormalLoss, SatisfiedMarginGivesZero) {
  const std::vector<PartVectors> e{{{0.0, 0.0}}, {{0.0, 0.0}}, {{1.0, 0.0}}};
  EXPECT_EQ(triplet_loss_normal(std::vector<Triplet>{{0, 1, 2}}, e, LossConfig{}), 0.0);
}

TEST(NormalLoss, HandComputedExample) {
  // a = (0,0), p = (1,1), n = (1,0): 2 − 1 + 0.2 = 1.2.
  const std::vector<PartVectors> e{{{0.0, 0.0}}, {{1.0, 1.0}}, {{1.0, 0.0}}};
  EXPECT_NEAR(triplet_loss_normal(std::vector<Triplet>{{0, 1, 2}}, e, LossConfig{}), 1.2, 1e-15);
  // Swapping roles: 1 − 2 + 0.2 < 0.
  EXPECT_EQ(triplet_loss_normal(std::vector<Triplet>{{0, 2, 1}}, e, LossConfig{}), 0.0);
  EXPECT_NEAR(triplet_loss_normal(std::vector<Triplet>{{0, 1, 2}, {0, 2, 1}}, e, LossConfig{}), 0.6, 1e-15);
}

TEST(NormalLoss, EmptySetIsZero) {
  EXPECT_EQ(triplet_loss_normal(std::vector<Triplet>{}, {}, LossConfig{}), 0.0);
}

TEST(UncertaintyLoss, DegeneratesToNormalAtHalfVariance) {
  Rng rng(1);
  const double s = std::sqrt(0.5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto mu = random_embeddings(6, 3, 4, rng);
    const auto t = random_triplets(6, 10, rng);
    const double normal = triplet_loss_normal(t, mu, LossConfig{});
    const double unc = triplet_loss_uncertainty(t, mu, constant_sigma(6, 3, 4, s), LossConfig{});
    ASSERT_NEAR(unc, normal, 1e-12);
  }
}

TEST(UncertaintyLoss, IdenticalEmbeddingsGiveMargin) {
  const std::vector<PartVectors> mu(3, PartVectors(1, Vector{0.5, 0.5}));
  Rng rng(2);
  auto sigma = random_embeddings(3, 1, 2, rng);
  for (auto& e : sigma)
    for (auto& x : e[0]) x = std::abs(x);
  LossConfig cfg;
  cfg.margin = 0.3;
  EXPECT_DOUBLE_EQ(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, cfg), 0.3);
}

TEST(UncertaintyLoss, MatchesFormulaOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mu = random_embeddings(5, 2, 3, rng);
    auto sigma = random_embeddings(5, 2, 3, rng);
    for (auto& e : sigma)
      for (auto& v : e)
        for (auto& x : v) x = std::abs(x);
    const auto t = random_triplets(5, 8, rng);
    LossConfig cfg;
    cfg.margin = rng.uniform(0.1, 2.0);
    ASSERT_NEAR(triplet_loss_uncertainty(t, mu, sigma, cfg), oracle_uncertainty(t, mu, sigma, cfg.margin), 1e-12);
  }
}

TEST(UncertaintyLoss, FloorOnZeroSigma) {
  const std::vector<PartVectors> mu{{{0.0}}, {{1e-3}}, {{0.0}}};
  const auto sigma = constant_sigma(3, 1, 1, 0.0);
  // d_ap = 1e-6 over the 1e-6 floor, d_an = 0: 1 − 0 + 0.2.
  EXPECT_NEAR(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, LossConfig{}), 1.2, 1e-9);
}

TEST(UncertaintyLoss, Errors) {
  const std::vector<PartVectors> mu{{{0.0}}, {{1.0}}, {{2.0}}};
  auto sigma = constant_sigma(3, 1, 1, 1.0);
  sigma[1][0][0] = -0.5;
  EXPECT_THROW(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, LossConfig{}), InputError);
  sigma[1][0][0] = std::nan("");
  EXPECT_THROW(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, LossConfig{}), NumericError);
}

TEST(UncertaintyLoss, AnchorUncertaintyShrinksPositiveTerm) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto mu = random_embeddings(3, 1, 3, rng);
    auto sigma = constant_sigma(3, 1, 3, 0.0);
    for (auto& e : sigma)
      for (auto& x : e[0]) x = rng.uniform(0.1, 1.0);
    // Isolate the positive-pair term: negative infinitely uncertain.
    for (auto& x : sigma[2][0]) x = 1e6;
    LossConfig cfg;
    cfg.margin = 100.0;
    const double before = triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, cfg);
    for (auto& x : sigma[0][0]) x *= 1.5;
    const double after = triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, cfg);
    ASSERT_LE(after, before + 1e-12);
  }
}

TEST(UncertaintyLoss, ElementwiseVariantFormula) {
  const std::vector<PartVectors> mu{{{0.0, 0.0}}, {{1.0, 2.0}}, {{3.0, 0.0}}};
  const std::vector<PartVectors> sigma{{{1.0, 1.0}}, {{1.0, 0.0}}, {{0.0, 2.0}}};
  LossConfig cfg;
  cfg.sigma_reduction = SigmaReduction::Elementwise;
  // positive: 1/(1+1) + 4/(1+0) = 4.5; negative: 9/(1+0) + 0/(1+4) = 9.
  EXPECT_NEAR(triplet_loss_uncertainty(std::vector<Triplet>{{0, 2, 1}}, mu, sigma, cfg), 4.7, 1e-14);
  EXPECT_EQ(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, cfg), 0.0);
  cfg.margin = 5.0;
  EXPECT_NEAR(triplet_loss_uncertainty(std::vector<Triplet>{{0, 1, 2}}, mu, sigma, cfg), 0.5, 1e-15);
}

TEST(TotalLoss, DoubleDegeneration) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto mv = random_embeddings(6, 2, 3, rng);
    const auto mc = random_embeddings(6, 2, 3, rng);
    TripletSets sets{random_triplets(6, 5, rng), random_triplets(6, 9, rng)};
    std::vector<ProgressiveEmbedding> emb(6);
    for (std::size_t i = 0; i < 6; ++i) {
      emb[i].mu_v = mv[i];
      emb[i].mu_c = mc[i];
      emb[i].sigma_v = emb[i].sigma_c = PartVectors(2, Vector(3, std::sqrt(0.5)));
      emb[i].e_v = mv[i];
      emb[i].e_c = mc[i];
    }
    const LossBreakdown b = total_loss(sets, emb, LossConfig{}, rng);
    const double expect = (triplet_loss_normal(sets.t_v, mv, LossConfig{}) + triplet_loss_normal(sets.t_c, mc, LossConfig{})) / 2;
    ASSERT_NEAR(b.total, expect, 1e-12);
    ASSERT_NEAR(*b.l_tv, *b.l_tv_e, 0.0);
  }
}

TEST(TotalLoss, EmptyTvRenormalizes) {
  Rng rng(6);
  const auto mu = random_embeddings(4, 1, 2, rng);
  std::vector<ProgressiveEmbedding> emb(4);
  for (std::size_t i = 0; i < 4; ++i) {
    emb[i].mu_v = emb[i].mu_c = emb[i].e_v = emb[i].e_c = mu[i];
    emb[i].sigma_v = emb[i].sigma_c = PartVectors(1, Vector(2, 1.0));
  }
  TripletSets sets{{}, {{0, 1, 2}, {2, 3, 0}}};
  const LossBreakdown b = total_loss(sets, emb, LossConfig{}, rng);
  EXPECT_FALSE(b.l_tv.has_value());
  EXPECT_FALSE(b.l_tv_e.has_value());
  EXPECT_FALSE(b.flags.empty());
  EXPECT_NEAR(b.total, (*b.l_tc + *b.l_tc_e) / 2, 1e-15);
}

TEST(TotalLoss, MatchesStraightLineOracle) {
  Rng rng(7);
  const auto mv = random_embeddings(5, 2, 2, rng);
  const auto mc = random_embeddings(5, 2, 2, rng);
  auto sv = random_embeddings(5, 2, 2, rng);
  auto sc = random_embeddings(5, 2, 2, rng);
  for (auto* s : {&sv, &sc})
    for (auto& e : *s)
      for (auto& v : e)
        for (auto& x : v) x = std::abs(x) + 0.1;
  const auto ev = random_embeddings(5, 2, 2, rng);
  const auto ec = random_embeddings(5, 2, 2, rng);
  TripletSets sets{random_triplets(5, 6, rng), random_triplets(5, 6, rng)};
  std::vector<ProgressiveEmbedding> emb(5);
  for (std::size_t i = 0; i < 5; ++i) emb[i] = {mv[i], mc[i], sv[i], sc[i], ev[i], ec[i]};
  LossConfig cfg;
  cfg.margin = 1.5;
  const LossBreakdown b = total_loss(sets, emb, cfg, rng);
  const double expect = (oracle_uncertainty(sets.t_v, mv, sv, 1.5) + oracle_uncertainty(sets.t_c, mc, sc, 1.5) +
                         oracle_uncertainty(sets.t_v, ev, sv, 1.5) + oracle_uncertainty(sets.t_c, ec, sc, 1.5)) /
                        4;
  EXPECT_NEAR(b.total, expect, 1e-12);
  double parts = 0.0;
  for (double x : b.per_part) parts += x;
  EXPECT_NEAR(parts, b.total, 1e-12);
  for (auto v : {b.l_tv, b.l_tc, b.l_tv_e, b.l_tc_e}) EXPECT_GE(*v, 0.0);
}

TEST(TotalLoss, SamplesMissingNoiseDeterministically) {
  Rng data(8);
  std::vector<ProgressiveEmbedding> emb(4);
  for (auto& e : emb) {
    e.mu_v = e.mu_c = random_embeddings(1, 1, 2, data)[0];
    e.sigma_v = e.sigma_c = PartVectors(1, Vector(2, 0.3));
  }
  auto copy = emb;
  TripletSets sets{{{0, 1, 2}}, {{0, 1, 3}}};
  Rng a(9), b(9);
  EXPECT_EQ(total_loss(sets, emb, LossConfig{}, a).total, total_loss(sets, copy, LossConfig{}, b).total);
  EXPECT_FALSE(emb[0].e_v.empty());
}

TEST(LossConfig, Validation) {
  LossConfig cfg;
  cfg.margin = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}
