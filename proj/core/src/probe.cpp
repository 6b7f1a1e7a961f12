#include "probmed/probe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace probmed {

using diff::Tensor;

Standardizer Standardizer::fit(const Tensor& x) {
  if (x.rows() == 0) throw std::invalid_argument("Standardizer::fit: no rows");
  Standardizer s;
  s.mean.assign(x.cols(), 0.0);
  s.inv_std.assign(x.cols(), 1.0);
  const double n = static_cast<double>(x.rows());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    double m = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) m += x(i, j);
    m /= n;
    double v = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i) v += (x(i, j) - m) * (x(i, j) - m);
    v /= n;
    s.mean[j] = m;
    s.inv_std[j] = v > 1e-24 ? 1.0 / std::sqrt(v) : 1.0;
  }
  return s;
}

Tensor Standardizer::apply(const Tensor& x) const {
  if (x.cols() != mean.size()) {
    throw diff::ShapeError("Standardizer::apply: expected " + std::to_string(mean.size()) +
                           " features, got " + std::to_string(x.cols()));
  }
  Tensor out = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = (x(i, j) - mean[j]) * inv_std[j];
  return out;
}

LinearProbe::LinearProbe(const Tensor& x, std::span<const int> labels, std::size_t n_classes,
                         const ProbeConfig& cfg)
    : w_(x.cols(), n_classes), b_(1, n_classes) {
  if (x.rows() != labels.size() || x.rows() == 0) {
    throw std::invalid_argument("LinearProbe: need one label per row and at least one row");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) {
      throw std::invalid_argument("LinearProbe: label " + std::to_string(y) + " out of range");
    }
  }
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    Tensor p = predict_proba(x);
    for (std::size_t i = 0; i < n; ++i) p(i, static_cast<std::size_t>(labels[i])) -= 1.0;
    Tensor gw(d, n_classes);
    Tensor gb(1, n_classes);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double r = p(i, c) * inv_n;
        gb[c] += r;
        for (std::size_t j = 0; j < d; ++j) gw(j, c) += x(i, j) * r;
      }
    for (std::size_t k = 0; k < w_.size(); ++k) w_[k] -= cfg.learning_rate * (gw[k] + cfg.l2 * w_[k]);
    for (std::size_t c = 0; c < n_classes; ++c) b_[c] -= cfg.learning_rate * gb[c];
  }
}

Tensor LinearProbe::logits(const Tensor& x) const {
  if (x.cols() != w_.rows()) {
    throw diff::ShapeError("LinearProbe: expected " + std::to_string(w_.rows()) +
                           " features, got " + std::to_string(x.cols()));
  }
  Tensor z(x.rows(), w_.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t c = 0; c < w_.cols(); ++c) {
      double acc = b_[c];
      for (std::size_t j = 0; j < x.cols(); ++j) acc += x(i, j) * w_(j, c);
      z(i, c) = acc;
    }
  return z;
}

Tensor LinearProbe::predict_proba(const Tensor& x) const {
  Tensor z = logits(x);
  for (std::size_t i = 0; i < z.rows(); ++i) {
    auto row = z.row_span(i);
    const double lse = diff::logsumexp(row);
    for (double& v : row) v = std::exp(v - lse);
  }
  return z;
}

std::vector<int> LinearProbe::predict(const Tensor& x) const {
  const Tensor z = logits(x);
  std::vector<int> out(z.rows());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    const auto row = z.row_span(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

double LinearProbe::accuracy(const Tensor& x, std::span<const int> labels) const {
  const std::vector<int> pred = predict(x);
  if (pred.size() != labels.size() || pred.empty()) {
    throw std::invalid_argument("LinearProbe::accuracy: label count mismatch");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace probmed
