#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "probmed/tensor.hpp"

namespace probmed {

struct ProbeConfig {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

/// Per-feature affine map fitted on one set of rows and applied to others.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> inv_std;

  static Standardizer fit(const diff::Tensor& x);
  diff::Tensor apply(const diff::Tensor& x) const;
};

/// Multinomial logistic regression trained by full-batch gradient descent
/// from zero weights on the mean cross-entropy plus l2/2 ||W||^2.
class LinearProbe {
 public:
  LinearProbe(const diff::Tensor& x, std::span<const int> labels, std::size_t n_classes,
              const ProbeConfig& cfg = {});

  /// Row-wise class probabilities, rows(x) x n_classes.
  diff::Tensor predict_proba(const diff::Tensor& x) const;
  std::vector<int> predict(const diff::Tensor& x) const;
  double accuracy(const diff::Tensor& x, std::span<const int> labels) const;

  const diff::Tensor& weights() const { return w_; }
  const diff::Tensor& bias() const { return b_; }

 private:
  diff::Tensor logits(const diff::Tensor& x) const;

  diff::Tensor w_;  // features x classes
  diff::Tensor b_;  // 1 x classes
};

}  // namespace probmed
