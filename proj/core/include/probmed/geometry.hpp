#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "probmed/graph.hpp"
#include "probmed/tensor.hpp"

namespace probmed {

/// Diagonal Gaussian N(mu, diag(exp(log_var))) in embedding space.
struct ProbEmbedding {
  std::vector<double> mu;
  std::vector<double> log_var;

  std::size_t dim() const { return mu.size(); }
  /// Throws std::invalid_argument on length mismatch or non-finite entries.
  void validate() const;

  friend bool operator==(const ProbEmbedding&, const ProbEmbedding&) = default;
};

enum class SimilarityKind { Cosine, Hellinger, Bhattacharyya, CSD };

std::string_view to_string(SimilarityKind kind);
/// Accepts "cosine", "hellinger", "bhattacharyya", "csd" (case-insensitive).
SimilarityKind parse_similarity(std::string_view name);

/// Lower bound applied to exp(log_var) inside the closed-form distances.
inline constexpr double kVarianceFloor = 1e-12;

/// Log of the Bhattacharyya coefficient summed over dimensions:
/// sum_o 0.5 log(2 sigma_a sigma_b / (s2_a + s2_b)) - (mu_a - mu_b)^2 / (4 (s2_a + s2_b)).
double log_bhattacharyya_coefficient(const ProbEmbedding& a, const ProbEmbedding& b);

/// Squared Hellinger distance in [0, 1].
double hellinger_sq(const ProbEmbedding& a, const ProbEmbedding& b);
/// 1 - sqrt(hellinger_sq), in [0, 1].
double hellinger_similarity(const ProbEmbedding& a, const ProbEmbedding& b);
double bhattacharyya_distance(const ProbEmbedding& a, const ProbEmbedding& b);
/// Expected squared distance between independent draws:
/// ||mu_a - mu_b||^2 + sum(s2_a + s2_b).
double csd(const ProbEmbedding& a, const ProbEmbedding& b);
/// Cosine of the mean vectors; log_var is ignored. Throws on a zero-norm mean.
double cosine_mu(const ProbEmbedding& a, const ProbEmbedding& b);

/// Larger is more similar for every kind: distances are negated.
double similarity(const ProbEmbedding& a, const ProbEmbedding& b, SimilarityKind kind);

/// n reparameterized draws mu + exp(0.5 log_var) * eps, eps ~ N(0, I).
std::vector<std::vector<double>> sample(const ProbEmbedding& e, std::size_t n,
                                        std::mt19937_64& rng);

/// |A| x |B| matrix of similarity(A[i], B[j], kind).
diff::Tensor pairwise_similarity(std::span<const ProbEmbedding> a,
                                 std::span<const ProbEmbedding> b, SimilarityKind kind);

/// A batch of Gaussian embeddings living on a graph: two N x D variables.
struct GaussianBatch {
  diff::Var mu;
  diff::Var log_var;

  std::size_t size() const { return mu.rows(); }
  std::size_t dim() const { return mu.cols(); }
};

GaussianBatch constant_batch(diff::Graph& graph, std::span<const ProbEmbedding> items);
GaussianBatch parameter_batch(diff::Graph& graph, std::span<const ProbEmbedding> items);
std::vector<ProbEmbedding> to_embeddings(const GaussianBatch& batch);

/// Differentiable N x M matrix of log Bhattacharyya coefficients.
diff::Var pairwise_log_bc(const GaussianBatch& a, const GaussianBatch& b);
/// Differentiable N x M matrix of CSD distances.
diff::Var pairwise_csd(const GaussianBatch& a, const GaussianBatch& b);
/// Differentiable N x M similarity matrix with the same conventions as the
/// scalar similarity().
diff::Var pairwise_similarity(const GaussianBatch& a, const GaussianBatch& b,
                              SimilarityKind kind);

}  // namespace probmed
