#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "probmed/geometry.hpp"
#include "probmed/losses.hpp"

namespace probmed::oracles {

/// 0.5 * integral of (sqrt(p) - sqrt(q))^2 for two 1-D normals, by composite
/// Simpson quadrature over +-14 standard deviations around both means.
double hellinger_sq_quadrature(double mu_a, double var_a, double mu_b, double var_b,
                               std::size_t intervals = 20000);

/// Monte Carlo estimate of KL(N(mu, diag var) || N(0, I)) as the sample mean
/// of log q(z) - log p(z), z ~ q.
double kl_monte_carlo(const ProbEmbedding& e, std::size_t samples, std::mt19937_64& rng);

/// Monte Carlo estimate of E ||z_a - z_b||^2 for independent draws.
double csd_monte_carlo(const ProbEmbedding& a, const ProbEmbedding& b, std::size_t samples,
                       std::mt19937_64& rng);

struct OracleResult {
  std::string name;
  double tolerance = 0.0;
  double error = 0.0;  // worst measured discrepancy
  std::size_t cases = 0;
  bool passed = false;
};

using DistanceFn = std::function<double(const ProbEmbedding&, const ProbEmbedding&)>;

/// Functions under test; the defaults are the library implementations.
struct Subject {
  DistanceFn hellinger_sq = probmed::hellinger_sq;
  DistanceFn bhattacharyya = probmed::bhattacharyya_distance;
  DistanceFn csd = probmed::csd;
  std::function<double(const ProbEmbedding&)> kl = [](const ProbEmbedding& e) {
    return probmed::vib_loss(std::span<const ProbEmbedding>(&e, 1));
  };
};

OracleResult check_hellinger_quadrature(const Subject& s, std::size_t pairs, std::uint64_t seed);
OracleResult check_gaussian_identity(const Subject& s, std::size_t pairs, std::uint64_t seed);
OracleResult check_kl_monte_carlo(const Subject& s, std::size_t samples, std::uint64_t seed);
OracleResult check_csd_monte_carlo(const Subject& s, std::size_t samples, std::uint64_t seed);

/// Central-difference checks of every similarity kind through the graph.
OracleResult check_similarity_gradients(std::size_t points, std::uint64_t seed);
/// Central-difference checks of InfoNCE, SIS (fixed noise) and VIB.
OracleResult check_loss_gradients(std::size_t points, std::uint64_t seed);
/// Full pair objective differentiated with respect to every parameter of two
/// encoders (train-mode batch norm, fixed SIS noise) on seeded 4-item batches.
OracleResult check_pair_loss_gradients(std::size_t batches, std::uint64_t seed, std::size_t hidden = 16,
                                       std::size_t embed = 8);

/// Everything above with the default sizes.
std::vector<OracleResult> run_suite(const Subject& s = {}, std::uint64_t seed = 20240611);

}  // namespace probmed::oracles
