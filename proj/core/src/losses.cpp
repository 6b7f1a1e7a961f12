#include "probmed/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "probmed/ops.hpp"

namespace probmed {

using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

// Added to self-similarity logits so they drop out of the softmax.
constexpr double kMaskedLogit = -1e30;

void check_tau(double tau, const char* op) {
  if (!(tau > 0.0)) throw std::invalid_argument(std::string(op) + ": tau must be > 0");
}

}  // namespace

void LossWeights::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("LossWeights: tau must be > 0");
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) {
    throw std::invalid_argument("LossWeights: alpha, beta and gamma must be >= 0");
  }
}

bool LossBreakdown::all_finite() const {
  for (double v : {total, mod_forward, mod_backward, sis_m1, sis_m2, vib_m1, vib_m2})
    if (!std::isfinite(v)) return false;
  return true;
}

Var info_nce_prob(const GaussianBatch& queries, const GaussianBatch& keys, SimilarityKind kind,
                  double tau, bool negate_similarity) {
  check_tau(tau, "info_nce_prob");
  const std::size_t n = queries.size();
  if (n == 0) throw std::invalid_argument("info_nce_prob: empty batch");
  if (keys.size() != n) {
    throw std::invalid_argument("info_nce_prob: " + std::to_string(n) + " queries but " +
                                std::to_string(keys.size()) + " keys");
  }
  const Var logits = diff::scale(pairwise_similarity(queries, keys, kind),
                                 (negate_similarity ? -1.0 : 1.0) / tau);
  std::vector<std::pair<std::size_t, std::size_t>> diagonal(n);
  for (std::size_t i = 0; i < n; ++i) diagonal[i] = {i, i};
  return diff::mean(diff::logsumexp_rows(logits) - diff::gather(logits, std::move(diagonal)));
}

double info_nce_prob(std::span<const ProbEmbedding> queries, std::span<const ProbEmbedding> keys,
                     SimilarityKind kind, double tau, bool negate_similarity) {
  if (queries.empty()) throw std::invalid_argument("info_nce_prob: empty batch");
  Graph g;
  return info_nce_prob(constant_batch(g, queries), constant_batch(g, keys), kind, tau,
                       negate_similarity)
      .item();
}

SisNoise draw_sis_noise(std::size_t n, std::size_t dim, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  SisNoise noise{Tensor(n, dim), Tensor(n, dim)};
  for (double& v : noise.first.data()) v = normal(rng);
  for (double& v : noise.second.data()) v = normal(rng);
  return noise;
}

Var sis_loss(const GaussianBatch& batch, double tau, const SisNoise& noise) {
  check_tau(tau, "sis_loss");
  const std::size_t n = batch.size();
  if (n < 2) throw std::invalid_argument("sis_loss: batch size must be >= 2 (no negatives)");
  if (!noise.first.same_shape(batch.mu.value()) || !noise.second.same_shape(batch.mu.value())) {
    diff::throw_shape_error("sis_loss", batch.mu.value(), noise.first);
  }
  Graph& g = batch.mu.graph();
  const Var sigma = diff::exp(diff::scale(batch.log_var, 0.5));
  const Var z1 = batch.mu + sigma * g.constant(noise.first);
  const Var z2 = batch.mu + sigma * g.constant(noise.second);
  const Var z = diff::l2_normalize_rows(diff::concat_rows(z1, z2));

  const std::size_t m = 2 * n;
  Tensor mask(m, m);
  for (std::size_t i = 0; i < m; ++i) mask(i, i) = kMaskedLogit;
  const Var logits = diff::scale(diff::matmul(z, diff::transpose(z)), 1.0 / tau) + g.constant(mask);

  std::vector<std::pair<std::size_t, std::size_t>> positives(m);
  for (std::size_t i = 0; i < m; ++i) positives[i] = {i, i < n ? i + n : i - n};
  return diff::mean(diff::logsumexp_rows(logits) - diff::gather(logits, std::move(positives)));
}

double sis_loss(std::span<const ProbEmbedding> items, double tau, std::mt19937_64& rng) {
  if (items.size() < 2) throw std::invalid_argument("sis_loss: batch size must be >= 2 (no negatives)");
  Graph g;
  const GaussianBatch batch = constant_batch(g, items);
  return sis_loss(batch, tau, draw_sis_noise(batch.size(), batch.dim(), rng)).item();
}

Var vib_loss(const GaussianBatch& batch) {
  if (batch.size() == 0) throw std::invalid_argument("vib_loss: empty batch");
  const Var per_entry =
      diff::exp(batch.log_var) + diff::square(batch.mu) - batch.log_var - 1.0;
  return diff::scale(diff::sum(per_entry), 0.5 / static_cast<double>(batch.size()));
}

double vib_loss(std::span<const ProbEmbedding> items) {
  Graph g;
  return vib_loss(constant_batch(g, items)).item();
}

PairLoss pair_loss(const GaussianBatch& m1, const GaussianBatch& m2, const LossWeights& w,
                   const PairLossOptions& opts, const SisNoise& noise_m1,
                   const SisNoise& noise_m2) {
  w.validate();
  if (m1.size() != m2.size() || m1.size() < 2) {
    throw std::invalid_argument("pair_loss: batches must have equal size >= 2 (got " +
                                std::to_string(m1.size()) + " and " + std::to_string(m2.size()) + ")");
  }
  const Var mod_f = info_nce_prob(m1, m2, opts.kind, w.tau, opts.negate_similarity);
  const Var mod_b = info_nce_prob(m2, m1, opts.kind, w.tau, opts.negate_similarity);
  const Var sis1 = sis_loss(m1, w.tau, noise_m1);
  const Var sis2 = sis_loss(m2, w.tau, noise_m2);
  const Var vib1 = vib_loss(m1);
  const Var vib2 = vib_loss(m2);

  const Var total = diff::scale(mod_f + mod_b, w.alpha) + diff::scale(sis1 + sis2, w.beta) +
                    diff::scale(vib1 + vib2, w.gamma);
  LossBreakdown b;
  b.total = total.item();
  b.mod_forward = mod_f.item();
  b.mod_backward = mod_b.item();
  b.sis_m1 = sis1.item();
  b.sis_m2 = sis2.item();
  b.vib_m1 = vib1.item();
  b.vib_m2 = vib2.item();
  return {total, b};
}

LossBreakdown pair_loss(std::span<const ProbEmbedding> m1, std::span<const ProbEmbedding> m2,
                        const LossWeights& w, SimilarityKind kind, std::mt19937_64& rng) {
  Graph g;
  const GaussianBatch b1 = constant_batch(g, m1);
  const GaussianBatch b2 = constant_batch(g, m2);
  const SisNoise n1 = draw_sis_noise(b1.size(), b1.dim(), rng);
  const SisNoise n2 = draw_sis_noise(b2.size(), b2.dim(), rng);
  return pair_loss(b1, b2, w, PairLossOptions{kind, false}, n1, n2).breakdown;
}

}  // namespace probmed
