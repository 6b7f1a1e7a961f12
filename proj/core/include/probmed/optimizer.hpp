#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "probmed/encoder.hpp"
#include "probmed/tensor.hpp"

namespace probmed {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

/// Moment accumulators for one encoder, aligned with EncoderParams::trainable().
struct EncoderOptState {
  std::vector<diff::Tensor> first_moment;
  std::vector<diff::Tensor> second_moment;
  std::uint64_t step = 0;

  friend bool operator==(const EncoderOptState&, const EncoderOptState&) = default;
};

struct OptimizerState {
  std::array<EncoderOptState, kNumModalities> encoders;
  /// Number of completed train steps; drives the learning-rate schedule.
  std::uint64_t step = 0;

  friend bool operator==(const OptimizerState&, const OptimizerState&) = default;
};

OptimizerState init_optimizer(const Model& model);

/// One AdamW update with decoupled weight decay on slots marked for decay.
/// lr = 0 leaves every parameter unchanged.
void adamw_step(EncoderParams& params, EncoderOptState& state, std::span<const diff::Tensor> grads,
                double lr, const AdamWConfig& cfg);

double global_norm(std::span<const diff::Tensor> grads);
/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(std::span<diff::Tensor> grads, double max_norm);

/// lr_max * (1 + cos(pi * step / total)) / 2; lr_max when total is 0.
double cosine_lr(std::uint64_t step, std::uint64_t total, double lr_max);

}  // namespace probmed
