#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "probmed/losses.hpp"

using namespace probmed;

namespace {

std::vector<ProbEmbedding> random_batch(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<ProbEmbedding> out(n);
  for (auto& e : out)
    for (std::size_t i = 0; i < d; ++i) {
      e.mu.push_back(g(rng));
      e.log_var.push_back(0.3 * g(rng));
    }
  return out;
}

}  // namespace

TEST(LossWeights, Validate) {
  EXPECT_NO_THROW(LossWeights{}.validate());
  EXPECT_THROW((LossWeights{1.0, 0.5, 1e-4, 0.0}.validate()), std::invalid_argument);
  EXPECT_THROW((LossWeights{-1.0, 0.5, 1e-4, 0.07}.validate()), std::invalid_argument);
  const LossWeights w;
  EXPECT_EQ(w.alpha, 1.0);
  EXPECT_EQ(w.beta, 0.5);
  EXPECT_EQ(w.gamma, 1e-4);
  EXPECT_EQ(w.tau, 0.07);
}

TEST(InfoNce, SingleItemIsZero) {
  std::mt19937_64 rng(1);
  const auto a = random_batch(1, 4, rng);
  const auto b = random_batch(1, 4, rng);
  EXPECT_EQ(info_nce_prob(a, b, SimilarityKind::Hellinger, 0.07), 0.0);
}

TEST(InfoNce, EqualSimilaritiesGiveLn2) {
  const std::vector<ProbEmbedding> a{{{0.0}, {0.0}}, {{0.0}, {0.0}}};
  EXPECT_NEAR(info_nce_prob(a, a, SimilarityKind::Hellinger, 0.07), std::log(2.0), 1e-15);
}

TEST(InfoNce, SeparatedPairsNearZero) {
  // Hellinger similarity 1 on the diagonal and 0 off it.
  const std::vector<ProbEmbedding> a{{{0.0}, {0.0}}, {{1e3}, {0.0}}};
  const double expected = -std::log(std::exp(1 / 0.07) / (std::exp(1 / 0.07) + 1.0));
  EXPECT_NEAR(info_nce_prob(a, a, SimilarityKind::Hellinger, 0.07), expected, 1e-12);
  EXPECT_NEAR(expected, 6.2487e-7, 1e-10);
}

TEST(InfoNce, Errors) {
  const std::vector<ProbEmbedding> empty;
  EXPECT_THROW(info_nce_prob(empty, empty, SimilarityKind::Hellinger, 0.07), std::invalid_argument);
  const std::vector<ProbEmbedding> a{{{0.0}, {0.0}}};
  EXPECT_THROW(info_nce_prob(a, a, SimilarityKind::Hellinger, 0.0), std::invalid_argument);
}

TEST(InfoNce, NegatedFormPrefersDissimilarPairs) {
  const std::vector<ProbEmbedding> a{{{0.0}, {0.0}}, {{1e3}, {0.0}}};
  EXPECT_GT(info_nce_prob(a, a, SimilarityKind::Hellinger, 0.07, true), 10.0);
}

TEST(Sis, OrthogonalSiblingsHandValue) {
  // N = 2, unit orthogonal means, near-zero variance: siblings coincide.
  diff::Graph g;
  const std::vector<ProbEmbedding> items{{{1.0, 0.0}, {-40.0, -40.0}}, {{0.0, 1.0}, {-40.0, -40.0}}};
  const GaussianBatch batch = constant_batch(g, items);
  SisNoise noise{diff::Tensor(2, 2), diff::Tensor(2, 2)};
  const double loss = sis_loss(batch, 1.0, noise).item();
  EXPECT_NEAR(loss, -std::log(std::exp(1.0) / (std::exp(1.0) + 2.0)), 1e-12);
  EXPECT_NEAR(loss, 0.5514, 1e-4);
}

TEST(Sis, PermutationInvariant) {
  std::mt19937_64 rng(2);
  const auto items = random_batch(5, 3, rng);
  const SisNoise noise = draw_sis_noise(5, 3, rng);
  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};
  std::vector<ProbEmbedding> permuted;
  SisNoise pn{diff::Tensor(5, 3), diff::Tensor(5, 3)};
  for (std::size_t i = 0; i < 5; ++i) {
    permuted.push_back(items[perm[i]]);
    for (std::size_t d = 0; d < 3; ++d) {
      pn.first(i, d) = noise.first(perm[i], d);
      pn.second(i, d) = noise.second(perm[i], d);
    }
  }
  diff::Graph g;
  const double a = sis_loss(constant_batch(g, items), 0.5, noise).item();
  const double b = sis_loss(constant_batch(g, permuted), 0.5, pn).item();
  EXPECT_NEAR(a, b, 1e-12);
}

TEST(Sis, NeedsTwoItems) {
  std::mt19937_64 rng(3);
  const auto items = random_batch(1, 3, rng);
  EXPECT_THROW(sis_loss(items, 0.5, rng), std::invalid_argument);
}

TEST(Vib, KnownValues) {
  EXPECT_EQ(vib_loss(std::vector<ProbEmbedding>{{{0.0, 0.0}, {0.0, 0.0}}}), 0.0);
  EXPECT_NEAR(vib_loss(std::vector<ProbEmbedding>{{{1.0}, {0.0}}}), 0.5, 1e-15);
  EXPECT_NEAR(vib_loss(std::vector<ProbEmbedding>{{{0.0}, {std::log(4.0)}}}),
              0.5 * (4.0 - 1.0 - std::log(4.0)), 1e-15);
}

TEST(PairLoss, TotalRecombinesComponentsProperty) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const auto m1 = random_batch(4, 6, rng);
    const auto m2 = random_batch(4, 6, rng);
    const LossWeights w{0.5 + trial * 0.1, 0.25 * (trial % 3), 1e-3 * trial, 0.1 + 0.05 * trial};
    const auto b = pair_loss(m1, m2, w, SimilarityKind::Hellinger, rng);
    EXPECT_NEAR(b.total, b.recombine(w), 1e-10);
    EXPECT_TRUE(b.all_finite());
  }
}

TEST(PairLoss, DefaultWeightsEqualIndividualComponents) {
  std::mt19937_64 rng(5);
  const auto m1 = random_batch(4, 6, rng);
  const auto m2 = random_batch(4, 6, rng);
  const LossWeights w;
  std::mt19937_64 loss_rng(99);
  const auto b = pair_loss(m1, m2, w, SimilarityKind::Hellinger, loss_rng);
  EXPECT_NEAR(b.mod_forward, info_nce_prob(m1, m2, SimilarityKind::Hellinger, w.tau), 1e-12);
  EXPECT_NEAR(b.mod_backward, info_nce_prob(m2, m1, SimilarityKind::Hellinger, w.tau), 1e-12);
  EXPECT_NEAR(b.vib_m1, vib_loss(m1), 1e-12);
  EXPECT_NEAR(b.vib_m2, vib_loss(m2), 1e-12);
  EXPECT_NEAR(b.total, w.alpha * (b.mod_forward + b.mod_backward) + w.beta * (b.sis_m1 + b.sis_m2) +
                           w.gamma * (b.vib_m1 + b.vib_m2),
              1e-10);
}

TEST(PairLoss, ZeroedWeights) {
  std::mt19937_64 rng(6);
  const auto m1 = random_batch(4, 3, rng);
  const auto m2 = random_batch(4, 3, rng);
  const LossWeights nce_only{1.0, 0.0, 0.0, 0.07};
  const auto b = pair_loss(m1, m2, nce_only, SimilarityKind::Hellinger, rng);
  EXPECT_NEAR(b.total, b.mod_forward + b.mod_backward, 1e-12);

  const std::vector<ProbEmbedding> prior(4, ProbEmbedding{{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}});
  const LossWeights vib_only{0.0, 0.0, 1.0, 0.07};
  EXPECT_EQ(pair_loss(prior, prior, vib_only, SimilarityKind::Hellinger, rng).total, 0.0);
}
