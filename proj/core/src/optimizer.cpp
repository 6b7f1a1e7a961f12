#include "probmed/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace probmed {

using diff::Tensor;

OptimizerState init_optimizer(const Model& model) {
  OptimizerState s;
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    for (const Tensor& t : model.encoders[i].trainable_values()) {
      s.encoders[i].first_moment.emplace_back(t.rows(), t.cols());
      s.encoders[i].second_moment.emplace_back(t.rows(), t.cols());
    }
  }
  return s;
}

void adamw_step(EncoderParams& params, EncoderOptState& state, std::span<const Tensor> grads,
                double lr, const AdamWConfig& cfg) {
  auto slots = params.trainable();
  if (grads.size() != slots.size() || state.first_moment.size() != slots.size()) {
    throw std::invalid_argument("adamw_step: expected " + std::to_string(slots.size()) +
                                " gradients and moments");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(cfg.beta1, t);
  const double bias2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < slots.size(); ++k) {
    Tensor& p = *slots[k].value;
    Tensor& m = state.first_moment[k];
    Tensor& v = state.second_moment[k];
    if (!grads[k].same_shape(p)) diff::throw_shape_error("adamw_step", p, grads[k]);
    const double decay = slots[k].decay ? lr * cfg.weight_decay : 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = grads[k][i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      if (lr == 0.0) continue;
      const double m_hat = m[i] / bias1;
      const double v_hat = v[i] / bias2;
      p[i] -= decay * p[i];
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double global_norm(std::span<const Tensor> grads) {
  double sq = 0.0;
  for (const Tensor& g : grads)
    for (double x : g.data()) sq += x * x;
  return std::sqrt(sq);
}

double clip_global_norm(std::span<Tensor> grads, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const double norm = global_norm(grads);
  if (norm > max_norm) {
    const double factor = max_norm / norm;
    for (Tensor& g : grads)
      for (double& x : g.data()) x *= factor;
  }
  return norm;
}

double cosine_lr(std::uint64_t step, std::uint64_t total, double lr_max) {
  if (total == 0) return lr_max;
  if (step > total) throw std::invalid_argument("cosine_lr: step exceeds total steps");
  if (step == total) return 0.0;
  const double frac = static_cast<double>(step) / static_cast<double>(total);
  return lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace probmed
