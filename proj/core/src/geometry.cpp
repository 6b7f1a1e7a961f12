#include "probmed/geometry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>
#include <string>

#include "probmed/ops.hpp"

namespace probmed {

using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

constexpr double kLogVarianceFloor = -27.631021115928547;  // log(1e-12)
constexpr double kLn2 = 0.69314718055994530942;

void require_same_dim(const ProbEmbedding& a, const ProbEmbedding& b, const char* op) {
  if (a.dim() != b.dim() || a.log_var.size() != b.log_var.size() ||
      a.mu.size() != a.log_var.size()) {
    throw std::invalid_argument(std::string(op) + ": dimension mismatch (" +
                                std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  }
}

inline double floored_variance(double log_var) {
  return std::max(std::exp(log_var), kVarianceFloor);
}

// One dimension of the log Bhattacharyya coefficient. sqrt(va * vb) keeps the
// a == b case exact: 2 sqrt(v^2) / 2v == 1.
inline double log_bc_term(double mu_a, double var_a, double mu_b, double var_b) {
  const double s = var_a + var_b;
  const double d = mu_a - mu_b;
  return 0.5 * std::log(2.0 * std::sqrt(var_a * var_b) / s) - d * d / (4.0 * s);
}

}  // namespace

void ProbEmbedding::validate() const {
  if (mu.size() != log_var.size()) {
    throw std::invalid_argument("ProbEmbedding: mu has " + std::to_string(mu.size()) +
                                " entries but log_var has " + std::to_string(log_var.size()));
  }
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!std::isfinite(mu[i]) || !std::isfinite(log_var[i])) {
      throw std::invalid_argument("ProbEmbedding: non-finite entry at dimension " +
                                  std::to_string(i));
    }
  }
}

std::string_view to_string(SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Cosine: return "cosine";
    case SimilarityKind::Hellinger: return "hellinger";
    case SimilarityKind::Bhattacharyya: return "bhattacharyya";
    case SimilarityKind::CSD: return "csd";
  }
  return "unknown";
}

SimilarityKind parse_similarity(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "cosine") return SimilarityKind::Cosine;
  if (lower == "hellinger") return SimilarityKind::Hellinger;
  if (lower == "bhattacharyya") return SimilarityKind::Bhattacharyya;
  if (lower == "csd") return SimilarityKind::CSD;
  throw std::invalid_argument("unknown similarity kind '" + std::string(name) +
                              "' (expected cosine|hellinger|bhattacharyya|csd)");
}

double log_bhattacharyya_coefficient(const ProbEmbedding& a, const ProbEmbedding& b) {
  require_same_dim(a, b, "log_bhattacharyya_coefficient");
  double t = 0.0;
  for (std::size_t o = 0; o < a.dim(); ++o) {
    t += log_bc_term(a.mu[o], floored_variance(a.log_var[o]), b.mu[o],
                     floored_variance(b.log_var[o]));
  }
  return t;
}

double hellinger_sq(const ProbEmbedding& a, const ProbEmbedding& b) {
  const double t = log_bhattacharyya_coefficient(a, b);
  return std::clamp(-std::expm1(t), 0.0, 1.0);
}

double hellinger_similarity(const ProbEmbedding& a, const ProbEmbedding& b) {
  return 1.0 - std::sqrt(hellinger_sq(a, b));
}

double bhattacharyya_distance(const ProbEmbedding& a, const ProbEmbedding& b) {
  require_same_dim(a, b, "bhattacharyya_distance");
  double total = 0.0;
  for (std::size_t o = 0; o < a.dim(); ++o) {
    const double va = floored_variance(a.log_var[o]);
    const double vb = floored_variance(b.log_var[o]);
    const double s = va + vb;
    const double d = a.mu[o] - b.mu[o];
    total += d * d / (4.0 * s) + 0.5 * std::log((0.5 * s) / std::sqrt(va * vb));
  }
  return std::max(total, 0.0);
}

double csd(const ProbEmbedding& a, const ProbEmbedding& b) {
  require_same_dim(a, b, "csd");
  double total = 0.0;
  for (std::size_t o = 0; o < a.dim(); ++o) {
    const double d = a.mu[o] - b.mu[o];
    total += d * d + std::exp(a.log_var[o]) + std::exp(b.log_var[o]);
  }
  return total;
}

double cosine_mu(const ProbEmbedding& a, const ProbEmbedding& b) {
  require_same_dim(a, b, "cosine_mu");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t o = 0; o < a.dim(); ++o) {
    dot += a.mu[o] * b.mu[o];
    na += a.mu[o] * a.mu[o];
    nb += b.mu[o] * b.mu[o];
  }
  if (na == 0.0 || nb == 0.0) throw std::invalid_argument("cosine_mu: zero-norm mean vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

double similarity(const ProbEmbedding& a, const ProbEmbedding& b, SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Cosine: return cosine_mu(a, b);
    case SimilarityKind::Hellinger: return hellinger_similarity(a, b);
    case SimilarityKind::Bhattacharyya: return -bhattacharyya_distance(a, b);
    case SimilarityKind::CSD: return -csd(a, b);
  }
  throw std::invalid_argument("similarity: unknown kind");
}

std::vector<std::vector<double>> sample(const ProbEmbedding& e, std::size_t n,
                                        std::mt19937_64& rng) {
  if (n == 0) throw std::invalid_argument("sample: n must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> sigma(e.dim());
  for (std::size_t o = 0; o < e.dim(); ++o) sigma[o] = std::exp(0.5 * e.log_var[o]);
  std::vector<std::vector<double>> out(n, std::vector<double>(e.dim()));
  for (auto& z : out)
    for (std::size_t o = 0; o < e.dim(); ++o) z[o] = e.mu[o] + sigma[o] * normal(rng);
  return out;
}

Tensor pairwise_similarity(std::span<const ProbEmbedding> a, std::span<const ProbEmbedding> b,
                           SimilarityKind kind) {
  Tensor out(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) out(i, j) = similarity(a[i], b[j], kind);
  return out;
}

namespace {

std::pair<Tensor, Tensor> stack(std::span<const ProbEmbedding> items) {
  const std::size_t d = items.empty() ? 0 : items.front().dim();
  Tensor mu(items.size(), d), lv(items.size(), d);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].dim() != d || items[i].log_var.size() != d) {
      throw std::invalid_argument("GaussianBatch: mixed embedding dimensions");
    }
    std::copy(items[i].mu.begin(), items[i].mu.end(), mu.row_span(i).begin());
    std::copy(items[i].log_var.begin(), items[i].log_var.end(), lv.row_span(i).begin());
  }
  return {std::move(mu), std::move(lv)};
}

void require_conforming(const GaussianBatch& a, const GaussianBatch& b, const char* op) {
  if (a.mu.value().cols() != b.mu.value().cols() || !a.mu.value().same_shape(a.log_var.value()) ||
      !b.mu.value().same_shape(b.log_var.value())) {
    diff::throw_shape_error(op, a.mu.value(), b.mu.value());
  }
}

// PS = 1 - sqrt(H^2) with H^2 = -expm1(T). The derivative's sqrt is floored
// at the variance floor so identical embeddings do not produce an infinite
// gradient.
Var hellinger_from_log_bc(Var log_bc) {
  const Tensor& t = log_bc.value();
  Tensor out(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.size(); ++i) {
    out[i] = 1.0 - std::sqrt(std::clamp(-std::expm1(t[i]), 0.0, 1.0));
  }
  return log_bc.graph().record(
      std::move(out), {log_bc}, [t](const Tensor& grad, std::span<Tensor* const> in) {
        if (!in[0]) return;
        for (std::size_t i = 0; i < t.size(); ++i) {
          const double h2 = std::max(-std::expm1(t[i]), kVarianceFloor);
          (*in[0])[i] += grad[i] * std::exp(t[i]) / (2.0 * std::sqrt(h2));
        }
      });
}

}  // namespace

GaussianBatch constant_batch(Graph& graph, std::span<const ProbEmbedding> items) {
  auto [mu, lv] = stack(items);
  return {graph.constant(std::move(mu)), graph.constant(std::move(lv))};
}

GaussianBatch parameter_batch(Graph& graph, std::span<const ProbEmbedding> items) {
  auto [mu, lv] = stack(items);
  return {graph.parameter(std::move(mu)), graph.parameter(std::move(lv))};
}

std::vector<ProbEmbedding> to_embeddings(const GaussianBatch& batch) {
  const Tensor& mu = batch.mu.value();
  const Tensor& lv = batch.log_var.value();
  std::vector<ProbEmbedding> out(mu.rows());
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    out[i].mu.assign(mu.row_span(i).begin(), mu.row_span(i).end());
    out[i].log_var.assign(lv.row_span(i).begin(), lv.row_span(i).end());
  }
  return out;
}

Var pairwise_log_bc(const GaussianBatch& a, const GaussianBatch& b) {
  require_conforming(a, b, "pairwise_log_bc");
  const Tensor& mu_a = a.mu.value();
  const Tensor& mu_b = b.mu.value();
  const std::size_t n = mu_a.rows(), m = mu_b.rows(), d = mu_a.cols();

  Tensor var_a(n, d), var_b(m, d);
  for (std::size_t i = 0; i < var_a.size(); ++i) var_a[i] = floored_variance(a.log_var.value()[i]);
  for (std::size_t i = 0; i < var_b.size(); ++i) var_b[i] = floored_variance(b.log_var.value()[i]);

  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double t = 0.0;
      for (std::size_t o = 0; o < d; ++o) t += log_bc_term(mu_a(i, o), var_a(i, o), mu_b(j, o), var_b(j, o));
      out(i, j) = t;
    }

  // Active-floor masks: no gradient reaches log_var where the floor binds.
  Tensor live_a(n, d), live_b(m, d);
  for (std::size_t i = 0; i < live_a.size(); ++i) live_a[i] = a.log_var.value()[i] > kLogVarianceFloor;
  for (std::size_t i = 0; i < live_b.size(); ++i) live_b[i] = b.log_var.value()[i] > kLogVarianceFloor;

  return a.mu.graph().record(
      std::move(out), {a.mu, a.log_var, b.mu, b.log_var},
      [mu_a, mu_b, var_a, var_b, live_a, live_b](const Tensor& grad,
                                                 std::span<Tensor* const> in) {
        const std::size_t n = mu_a.rows(), m = mu_b.rows(), d = mu_a.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double g = grad(i, j);
            if (g == 0.0) continue;
            for (std::size_t o = 0; o < d; ++o) {
              const double va = var_a(i, o), vb = var_b(j, o);
              const double s = va + vb;
              const double diff = mu_a(i, o) - mu_b(j, o);
              const double dmu = -diff / (2.0 * s);
              const double q = diff * diff / (4.0 * s * s);
              if (in[0]) (*in[0])(i, o) += g * dmu;
              if (in[2]) (*in[2])(j, o) -= g * dmu;
              if (in[1] && live_a(i, o) != 0.0) (*in[1])(i, o) += g * (0.25 - va / (2.0 * s) + q * va);
              if (in[3] && live_b(j, o) != 0.0) (*in[3])(j, o) += g * (0.25 - vb / (2.0 * s) + q * vb);
            }
          }
      });
}

Var pairwise_csd(const GaussianBatch& a, const GaussianBatch& b) {
  require_conforming(a, b, "pairwise_csd");
  const Tensor& mu_a = a.mu.value();
  const Tensor& mu_b = b.mu.value();
  const std::size_t n = mu_a.rows(), m = mu_b.rows(), d = mu_a.cols();
  Tensor var_a(n, d), var_b(m, d);
  for (std::size_t i = 0; i < var_a.size(); ++i) var_a[i] = std::exp(a.log_var.value()[i]);
  for (std::size_t i = 0; i < var_b.size(); ++i) var_b[i] = std::exp(b.log_var.value()[i]);

  Tensor out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double t = 0.0;
      for (std::size_t o = 0; o < d; ++o) {
        const double diff = mu_a(i, o) - mu_b(j, o);
        t += diff * diff + var_a(i, o) + var_b(j, o);
      }
      out(i, j) = t;
    }

  return a.mu.graph().record(
      std::move(out), {a.mu, a.log_var, b.mu, b.log_var},
      [mu_a, mu_b, var_a, var_b](const Tensor& grad, std::span<Tensor* const> in) {
        const std::size_t n = mu_a.rows(), m = mu_b.rows(), d = mu_a.cols();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < m; ++j) {
            const double g = grad(i, j);
            for (std::size_t o = 0; o < d; ++o) {
              const double diff = mu_a(i, o) - mu_b(j, o);
              if (in[0]) (*in[0])(i, o) += g * 2.0 * diff;
              if (in[2]) (*in[2])(j, o) -= g * 2.0 * diff;
              if (in[1]) (*in[1])(i, o) += g * var_a(i, o);
              if (in[3]) (*in[3])(j, o) += g * var_b(j, o);
            }
          }
      });
}

Var pairwise_similarity(const GaussianBatch& a, const GaussianBatch& b, SimilarityKind kind) {
  switch (kind) {
    case SimilarityKind::Cosine: {
      require_conforming(a, b, "pairwise_similarity");
      return diff::matmul(diff::l2_normalize_rows(a.mu), diff::transpose(diff::l2_normalize_rows(b.mu)));
    }
    case SimilarityKind::Hellinger: return hellinger_from_log_bc(pairwise_log_bc(a, b));
    case SimilarityKind::Bhattacharyya: return pairwise_log_bc(a, b);
    case SimilarityKind::CSD: return diff::negate(pairwise_csd(a, b));
  }
  throw std::invalid_argument("pairwise_similarity: unknown kind");
}

}  // namespace probmed
