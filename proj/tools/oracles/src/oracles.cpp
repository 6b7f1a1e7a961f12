#include "probmed/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "probmed/encoder.hpp"
#include "probmed/grad_check.hpp"
#include "probmed/losses.hpp"
#include "probmed/ops.hpp"

namespace probmed::oracles {

using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

double normal_pdf(double x, double mu, double var) {
  const double d = x - mu;
  return std::exp(-d * d / (2.0 * var)) / std::sqrt(2.0 * std::numbers::pi * var);
}

ProbEmbedding random_embedding(std::size_t d, std::mt19937_64& rng, double mu_range = 2.0,
                               double lv_range = 1.5) {
  std::uniform_real_distribution<double> mu(-mu_range, mu_range);
  std::uniform_real_distribution<double> lv(-lv_range, lv_range);
  ProbEmbedding e;
  for (std::size_t o = 0; o < d; ++o) {
    e.mu.push_back(mu(rng));
    e.log_var.push_back(lv(rng));
  }
  return e;
}

Tensor random_tensor(std::size_t r, std::size_t c, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(r, c);
  for (double& x : t.data()) x = n(rng);
  return t;
}

OracleResult finish(std::string name, double tol, double err, std::size_t cases) {
  return OracleResult{std::move(name), tol, err, cases, err < tol};
}

}  // namespace

double hellinger_sq_quadrature(double mu_a, double var_a, double mu_b, double var_b,
                               std::size_t intervals) {
  const double sd = std::sqrt(std::max(var_a, var_b));
  const double lo = std::min(mu_a, mu_b) - 14.0 * sd;
  const double hi = std::max(mu_a, mu_b) + 14.0 * sd;
  if (intervals % 2) ++intervals;
  const double h = (hi - lo) / static_cast<double>(intervals);
  auto f = [&](double x) {
    const double d = std::sqrt(normal_pdf(x, mu_a, var_a)) - std::sqrt(normal_pdf(x, mu_b, var_b));
    return d * d;
  };
  double acc = f(lo) + f(hi);
  for (std::size_t i = 1; i < intervals; ++i)
    acc += (i % 2 ? 4.0 : 2.0) * f(lo + h * static_cast<double>(i));
  return 0.5 * acc * h / 3.0;
}

double kl_monte_carlo(const ProbEmbedding& e, std::size_t samples, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (std::size_t o = 0; o < e.dim(); ++o) {
      const double eps = n(rng);
      const double z = e.mu[o] + std::exp(0.5 * e.log_var[o]) * eps;
      // log q(z) - log p(z), the 2 pi terms cancel.
      log_ratio += -0.5 * e.log_var[o] - 0.5 * eps * eps + 0.5 * z * z;
    }
    acc += log_ratio;
  }
  return acc / static_cast<double>(samples);
}

double csd_monte_carlo(const ProbEmbedding& a, const ProbEmbedding& b, std::size_t samples,
                       std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double sq = 0.0;
    for (std::size_t o = 0; o < a.dim(); ++o) {
      const double za = a.mu[o] + std::exp(0.5 * a.log_var[o]) * n(rng);
      const double zb = b.mu[o] + std::exp(0.5 * b.log_var[o]) * n(rng);
      sq += (za - zb) * (za - zb);
    }
    acc += sq;
  }
  return acc / static_cast<double>(samples);
}

OracleResult check_hellinger_quadrature(const Subject& s, std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t i = 0; i < pairs; ++i) {
    const ProbEmbedding a = random_embedding(1, rng, 3.0, 2.0);
    const ProbEmbedding b = random_embedding(1, rng, 3.0, 2.0);
    const double ref = hellinger_sq_quadrature(a.mu[0], std::exp(a.log_var[0]), b.mu[0], std::exp(b.log_var[0]));
    worst = std::max(worst, std::abs(s.hellinger_sq(a, b) - ref));
  }
  return finish("hellinger_sq vs quadrature (1-D)", 1e-6, worst, pairs);
}

OracleResult check_gaussian_identity(const Subject& s, std::size_t pairs, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t d : {1, 8, 64}) {
    for (std::size_t i = 0; i < pairs; ++i, ++cases) {
      // Spread shrinks with D so the coefficient stays away from underflow.
      const double range = 2.0 / std::sqrt(static_cast<double>(d));
      const ProbEmbedding a = random_embedding(d, rng, range, 1.0);
      const ProbEmbedding b = random_embedding(d, rng, range, 1.0);
      const double lhs = s.hellinger_sq(a, b);
      const double rhs = -std::expm1(-s.bhattacharyya(a, b));
      worst = std::max(worst, std::abs(lhs - rhs));
    }
  }
  return finish("H^2 = 1 - exp(-D_B), D in {1,8,64}", 1e-10, worst, cases);
}

OracleResult check_kl_monte_carlo(const Subject& s, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<ProbEmbedding> cases = {
      {{1.0}, {0.0}},
      {{0.0}, {std::log(4.0)}},
      {{0.0}, {0.0}},
      {{-0.5}, {std::log(0.5)}},
      {{2.0}, {std::log(1.5)}},
      {{0.3}, {std::log(0.25)}},
      {{1.0, -1.0}, {0.0, std::log(2.0)}},
      {{0.5, 0.5, -0.5}, {-0.3, 0.2, 0.1}},
      {{-1.5}, {std::log(3.0)}},
      {{0.0, 0.0, 0.0, 0.0}, {0.5, -0.5, 0.5, -0.5}},
  };
  double worst = 0.0;
  for (const auto& e : cases) worst = std::max(worst, std::abs(s.kl(e) - kl_monte_carlo(e, samples, rng)));
  return finish("vib_loss vs Monte Carlo KL", 1e-2, worst, cases.size());
}

OracleResult check_csd_monte_carlo(const Subject& s, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const std::vector<std::pair<ProbEmbedding, ProbEmbedding>> cases = {
      {{{0.0}, {0.0}}, {{1.0}, {0.0}}},
      {{{0.5, -0.5}, {-1.0, -0.5}}, {{0.0, 0.0}, {-0.7, -1.2}}},
      {{{0.2}, {std::log(0.3)}}, {{-0.2}, {std::log(0.2)}}},
  };
  double worst = 0.0;
  for (const auto& [a, b] : cases)
    worst = std::max(worst, std::abs(s.csd(a, b) - csd_monte_carlo(a, b, samples, rng)));
  return finish("csd vs Monte Carlo E||za - zb||^2", 1e-2, worst, cases.size());
}

OracleResult check_similarity_gradients(std::size_t points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t cases = 0;
  for (SimilarityKind kind : {SimilarityKind::Cosine, SimilarityKind::Hellinger, SimilarityKind::Bhattacharyya,
                              SimilarityKind::CSD}) {
    for (std::size_t i = 0; i < points; ++i, ++cases) {
      const std::vector<Tensor> params = {random_tensor(2, 8, 0.5, rng), random_tensor(2, 8, 0.5, rng),
                                          random_tensor(3, 8, 0.5, rng), random_tensor(3, 8, 0.5, rng)};
      const Tensor weights = random_tensor(2, 3, 1.0, rng);
      auto f = [&](Graph& g, std::span<const Var> p) {
        const Var sim = pairwise_similarity(GaussianBatch{p[0], p[1]}, GaussianBatch{p[2], p[3]}, kind);
        return diff::sum(sim * g.constant(weights));
      };
      worst = std::max(worst, diff::grad_check(f, params));
    }
  }
  return finish("similarity gradients vs central differences", 1e-4, worst, cases);
}

OracleResult check_loss_gradients(std::size_t points, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t i = 0; i < points; ++i) {
    const std::vector<Tensor> params = {random_tensor(4, 6, 0.3, rng), random_tensor(4, 6, 0.3, rng),
                                        random_tensor(4, 6, 0.3, rng), random_tensor(4, 6, 0.3, rng)};
    const SisNoise noise = draw_sis_noise(4, 6, rng);
    const double tau = 0.5;
    auto nce = [&](Graph&, std::span<const Var> p) {
      return info_nce_prob(GaussianBatch{p[0], p[1]}, GaussianBatch{p[2], p[3]}, SimilarityKind::Hellinger, tau);
    };
    auto sis = [&](Graph&, std::span<const Var> p) { return sis_loss(GaussianBatch{p[0], p[1]}, tau, noise); };
    auto vib = [&](Graph&, std::span<const Var> p) { return vib_loss(GaussianBatch{p[0], p[1]}); };
    worst = std::max({worst, diff::grad_check(nce, params), diff::grad_check(sis, params),
                      diff::grad_check(vib, params)});
    cases += 3;
  }
  return finish("InfoNCE / SIS / VIB gradients vs central differences", 1e-4, worst, cases);
}

OracleResult check_pair_loss_gradients(std::size_t batches, std::uint64_t seed, std::size_t hidden,
                                       std::size_t embed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (std::size_t b = 0; b < batches; ++b) {
    const EncoderParams e1 = init_encoder(rng(), EncoderDims{6, hidden, embed}, true);
    const EncoderParams e2 = init_encoder(rng(), EncoderDims{5, hidden, embed}, true);
    const Tensor x1 = random_tensor(4, 6, 1.0, rng);
    const Tensor x2 = random_tensor(4, 5, 1.0, rng);
    const SisNoise n1 = draw_sis_noise(4, embed, rng);
    const SisNoise n2 = draw_sis_noise(4, embed, rng);
    std::vector<Tensor> params = e1.trainable_values();
    const std::size_t split = params.size();
    for (const Tensor& t : e2.trainable_values()) params.push_back(t);
    auto f = [&](Graph& g, std::span<const Var> p) {
      const EncodeResult r1 = encode(g, e1, p.first(split), g.constant(x1), Mode::Train);
      const EncodeResult r2 = encode(g, e2, p.subspan(split), g.constant(x2), Mode::Train);
      return pair_loss(r1.embedding, r2.embedding, LossWeights{}, PairLossOptions{}, n1, n2).total;
    };
    worst = std::max(worst, diff::grad_check(f, params));
  }
  return finish("pair objective gradients w.r.t. encoder parameters", 1e-4, worst, batches);
}

std::vector<OracleResult> run_suite(const Subject& s, std::uint64_t seed) {
  return {check_hellinger_quadrature(s, 100, seed),
          check_gaussian_identity(s, 1000, seed + 1),
          check_kl_monte_carlo(s, 1000000, seed + 2),
          check_csd_monte_carlo(s, 1000000, seed + 3),
          check_similarity_gradients(25, seed + 4),
          check_loss_gradients(10, seed + 5),
          check_pair_loss_gradients(10, seed + 6)};
}

}  // namespace probmed::oracles
