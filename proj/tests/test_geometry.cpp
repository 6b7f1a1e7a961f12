#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "probmed/geometry.hpp"
#include "probmed/grad_check.hpp"
#include "probmed/ops.hpp"
#include "probmed/oracles.hpp"

using namespace probmed;

namespace {

ProbEmbedding gauss(std::vector<double> mu, std::vector<double> var) {
  ProbEmbedding e{std::move(mu), {}};
  for (double v : var) e.log_var.push_back(std::log(v));
  return e;
}

ProbEmbedding random_embedding(std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ProbEmbedding e;
  for (std::size_t i = 0; i < d; ++i) {
    e.mu.push_back(n(rng));
    e.log_var.push_back(0.5 * n(rng));
  }
  return e;
}

}  // namespace

TEST(Hellinger, KnownValues) {
  const auto a = gauss({0.0}, {1.0});
  EXPECT_EQ(hellinger_sq(a, a), 0.0);
  EXPECT_NEAR(hellinger_sq(a, gauss({1.0}, {1.0})), 0.117503, 1e-6);
  EXPECT_NEAR(hellinger_sq(a, gauss({0.0}, {4.0})), 0.105573, 1e-6);
}

TEST(Hellinger, MatchesQuadratureOracle) {
  const auto a = gauss({0.3}, {0.7});
  const auto b = gauss({-1.1}, {2.5});
  EXPECT_NEAR(hellinger_sq(a, b), oracles::hellinger_sq_quadrature(0.3, 0.7, -1.1, 2.5), 1e-8);
}

TEST(Hellinger, SimilarityValues) {
  const auto a = gauss({0.0}, {1.0});
  EXPECT_EQ(hellinger_similarity(a, a), 1.0);
  EXPECT_NEAR(hellinger_similarity(a, gauss({1.0}, {1.0})), 1.0 - std::sqrt(0.117503), 1e-6);
  EXPECT_NEAR(hellinger_similarity(a, gauss({1e3}, {1.0})), 0.0, 1e-12);
}

TEST(Hellinger, DimensionMismatchThrows) {
  EXPECT_THROW(hellinger_sq(gauss({0.0}, {1.0}), gauss({0.0, 1.0}, {1.0, 1.0})), std::invalid_argument);
  EXPECT_THROW(csd(gauss({0.0}, {1.0}), gauss({0.0, 1.0}, {1.0, 1.0})), std::invalid_argument);
  EXPECT_THROW(bhattacharyya_distance(gauss({0.0}, {1.0}), gauss({0.0, 1.0}, {1.0, 1.0})),
               std::invalid_argument);
}

TEST(Hellinger, BoundedSymmetricProperty) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_embedding(8, rng);
    const auto b = random_embedding(8, rng);
    const double h = hellinger_sq(a, b);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, 1.0);
    EXPECT_DOUBLE_EQ(h, hellinger_sq(b, a));
    EXPECT_NEAR(h, 1.0 - std::exp(-bhattacharyya_distance(a, b)), 1e-10);
  }
}

TEST(Bhattacharyya, KnownValues) {
  const auto a = gauss({0.0}, {1.0});
  EXPECT_EQ(bhattacharyya_distance(a, a), 0.0);
  EXPECT_NEAR(bhattacharyya_distance(a, gauss({1.0}, {1.0})), 0.125, 1e-15);
}

TEST(Csd, KnownValues) {
  const auto a = gauss({0.5, -1.0}, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(csd(a, a), 4.0);
  EXPECT_DOUBLE_EQ(csd(gauss({0.0}, {1.0}), gauss({1.0}, {1.0})), 3.0);
}

TEST(Csd, VarianceTermScalesLinearly) {
  const auto a = gauss({1.0, 2.0}, {0.5, 1.5});
  const auto b = gauss({1.0, 2.0}, {2.0, 0.25});
  const auto a3 = gauss({1.0, 2.0}, {1.5, 4.5});
  const auto b3 = gauss({1.0, 2.0}, {6.0, 0.75});
  EXPECT_NEAR(csd(a3, b3), 3.0 * csd(a, b), 1e-12);
}

TEST(Cosine, KnownValues) {
  const auto a = gauss({1.0, 0.0}, {1.0, 1.0});
  EXPECT_DOUBLE_EQ(cosine_mu(a, a), 1.0);
  EXPECT_DOUBLE_EQ(cosine_mu(a, gauss({0.0, 3.0}, {2.0, 1.0})), 0.0);
  EXPECT_DOUBLE_EQ(cosine_mu(a, gauss({-1.0, 0.0}, {1.0, 1.0})), -1.0);
  EXPECT_THROW(cosine_mu(a, gauss({0.0, 0.0}, {1.0, 1.0})), std::invalid_argument);
}

TEST(Similarity, DistancesAreNegated) {
  const auto a = gauss({0.0}, {1.0});
  const auto b = gauss({1.0}, {1.0});
  EXPECT_DOUBLE_EQ(similarity(a, b, SimilarityKind::CSD), -3.0);
  EXPECT_DOUBLE_EQ(similarity(a, b, SimilarityKind::Bhattacharyya), -0.125);
  EXPECT_EQ(parse_similarity("Hellinger"), SimilarityKind::Hellinger);
  EXPECT_THROW(parse_similarity("euclid"), std::invalid_argument);
}

TEST(Embedding, ValidateRejectsBadInput) {
  EXPECT_THROW((ProbEmbedding{{0.0, 1.0}, {0.0}}.validate()), std::invalid_argument);
  EXPECT_THROW((ProbEmbedding{{NAN}, {0.0}}.validate()), std::invalid_argument);
  EXPECT_NO_THROW((ProbEmbedding{{0.0}, {0.0}}.validate()));
}

TEST(Sample, DegenerateVarianceReturnsMean) {
  std::mt19937_64 rng(5);
  const ProbEmbedding e{{1.5, -2.0}, {-40.0, -40.0}};
  for (const auto& s : sample(e, 10, rng)) {
    EXPECT_NEAR(s[0], 1.5, 1e-8);
    EXPECT_NEAR(s[1], -2.0, 1e-8);
  }
}

TEST(Sample, MomentsMatchStatisticalOracle) {
  std::mt19937_64 rng(6);
  const auto e = gauss({0.5, -1.0, 2.0}, {0.25, 1.0, 4.0});
  const std::size_t n = 100000;
  const auto draws = sample(e, n, rng);
  for (std::size_t d = 0; d < 3; ++d) {
    double m = 0.0, m2 = 0.0;
    for (const auto& s : draws) m += s[d];
    m /= n;
    for (const auto& s : draws) m2 += (s[d] - m) * (s[d] - m);
    m2 /= n - 1;
    const double var = std::exp(e.log_var[d]);
    EXPECT_LT(std::abs(m - e.mu[d]), 4.0 * std::sqrt(var / n));
    EXPECT_LT(std::abs(m2 - var), 0.1 * var);
  }
}

TEST(Pairwise, IdenticalSetsUnderHellinger) {
  std::mt19937_64 rng(7);
  std::vector<ProbEmbedding> a;
  for (int i = 0; i < 5; ++i) a.push_back(random_embedding(4, rng));
  const auto s = pairwise_similarity(a, a, SimilarityKind::Hellinger);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(s(i, i), 1.0);
}

TEST(Pairwise, CsdDiagonalIsRowMaxWithSharedVariance) {
  std::mt19937_64 rng(8);
  std::vector<ProbEmbedding> a;
  for (int i = 0; i < 6; ++i) {
    auto e = random_embedding(4, rng);
    e.log_var.assign(4, 0.3);
    a.push_back(e);
  }
  const auto s = pairwise_similarity(a, a, SimilarityKind::CSD);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      if (i != j) {
        EXPECT_GT(s(i, i), s(i, j));
      }
}

TEST(Pairwise, MatchesScalarOpsAndGraphVersion) {
  std::mt19937_64 rng(9);
  const std::vector<ProbEmbedding> a{gauss({0.1, 0.4}, {0.5, 2.0}), gauss({-1.0, 0.3}, {1.0, 0.2})};
  const std::vector<ProbEmbedding> b{gauss({0.0, 1.0}, {1.5, 0.7}), gauss({2.0, -0.5}, {0.3, 0.9})};
  for (auto kind : {SimilarityKind::Hellinger, SimilarityKind::Bhattacharyya, SimilarityKind::CSD,
                    SimilarityKind::Cosine}) {
    const auto s = pairwise_similarity(a, b, kind);
    diff::Graph g;
    const auto gs = pairwise_similarity(constant_batch(g, a), constant_batch(g, b), kind).value();
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_DOUBLE_EQ(s(i, j), similarity(a[i], b[j], kind));
        EXPECT_NEAR(gs(i, j), s(i, j), 1e-12);
      }
  }
  const std::vector<ProbEmbedding> mixed{gauss({0.0}, {1.0})};
  EXPECT_THROW(pairwise_similarity(a, mixed, SimilarityKind::Hellinger), std::invalid_argument);
}

TEST(Pairwise, HellingerGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  const auto a = random_embedding(8, rng);
  const auto b = random_embedding(8, rng);
  const std::vector<diff::Tensor> params{diff::Tensor::row(a.mu), diff::Tensor::row(a.log_var),
                                         diff::Tensor::row(b.mu), diff::Tensor::row(b.log_var)};
  auto f = [](diff::Graph&, std::span<const diff::Var> p) {
    return diff::sum(pairwise_similarity(GaussianBatch{p[0], p[1]}, GaussianBatch{p[2], p[3]},
                                         SimilarityKind::Hellinger));
  };
  EXPECT_LT(diff::grad_check(f, params), 1e-4);
}
