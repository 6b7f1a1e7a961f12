#pragma once

#include <cstddef>
#include <random>
#include <span>

#include "probmed/geometry.hpp"

namespace probmed {

/// Weights of the combined pair objective and the shared temperature.
struct LossWeights {
  double alpha = 1.0;   // cross-modal InfoNCE
  double beta = 0.5;    // synthetic instance sampling
  double gamma = 1e-4;  // KL to the standard normal prior
  double tau = 0.07;

  void validate() const;

  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double total = 0.0;
  double mod_forward = 0.0;
  double mod_backward = 0.0;
  double sis_m1 = 0.0;
  double sis_m2 = 0.0;
  double vib_m1 = 0.0;
  double vib_m2 = 0.0;

  /// alpha (f + b) + beta (s1 + s2) + gamma (v1 + v2).
  double recombine(const LossWeights& w) const {
    return w.alpha * (mod_forward + mod_backward) + w.beta * (sis_m1 + sis_m2) +
           w.gamma * (vib_m1 + vib_m2);
  }
  bool all_finite() const;

  friend bool operator==(const LossBreakdown&, const LossBreakdown&) = default;
};

/// InfoNCE over a batch where row i of `queries` pairs with row i of `keys`:
/// -(1/N) sum_i log softmax_j(sign * s_ij / tau)[i]. `negate_similarity`
/// selects sign = -1 (the exp(-PS/tau) reading); the default favors the
/// positive pair.
diff::Var info_nce_prob(const GaussianBatch& queries, const GaussianBatch& keys,
                        SimilarityKind kind, double tau, bool negate_similarity = false);
double info_nce_prob(std::span<const ProbEmbedding> queries, std::span<const ProbEmbedding> keys,
                     SimilarityKind kind, double tau, bool negate_similarity = false);

/// Standard-normal noise for the two reparameterized views of each item.
struct SisNoise {
  diff::Tensor first;
  diff::Tensor second;
};
SisNoise draw_sis_noise(std::size_t n, std::size_t dim, std::mt19937_64& rng);

/// NT-Xent over 2N reparameterized samples with cosine similarity: each
/// anchor's positive is its sibling draw, the other 2N - 2 samples are
/// negatives, averaged over all 2N anchors. Requires N >= 2.
diff::Var sis_loss(const GaussianBatch& batch, double tau, const SisNoise& noise);
double sis_loss(std::span<const ProbEmbedding> items, double tau, std::mt19937_64& rng);

/// Mean over the batch of KL(N(mu, diag s2) || N(0, I)).
diff::Var vib_loss(const GaussianBatch& batch);
double vib_loss(std::span<const ProbEmbedding> items);

struct PairLoss {
  diff::Var total;
  LossBreakdown breakdown;
};

struct PairLossOptions {
  SimilarityKind kind = SimilarityKind::Hellinger;
  bool negate_similarity = false;
};

/// Combined objective for one modality pair. Both batches must have the same
/// size N >= 2.
PairLoss pair_loss(const GaussianBatch& m1, const GaussianBatch& m2, const LossWeights& w,
                   const PairLossOptions& opts, const SisNoise& noise_m1,
                   const SisNoise& noise_m2);
LossBreakdown pair_loss(std::span<const ProbEmbedding> m1, std::span<const ProbEmbedding> m2,
                        const LossWeights& w, SimilarityKind kind, std::mt19937_64& rng);

}  // namespace probmed
