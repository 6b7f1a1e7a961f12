#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "probmed/geometry.hpp"
#include "probmed/graph.hpp"
#include "probmed/modality.hpp"
#include "probmed/tensor.hpp"

namespace probmed {

struct EncoderDims {
  std::size_t input = 0;
  std::size_t hidden = 64;
  std::size_t embed = 32;

  friend bool operator==(const EncoderDims&, const EncoderDims&) = default;
};

/// Batch normalization over the hidden features, placed between the trunk and
/// the two heads.
struct BatchNorm {
  diff::Tensor scale;
  diff::Tensor shift;
  diff::Tensor running_mean;
  diff::Tensor running_var;
  double momentum = 0.1;
  double eps = 1e-5;

  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};

/// Trainable tensor plus whether decoupled weight decay applies to it.
struct ParamSlot {
  std::string_view name;
  diff::Tensor* value;
  bool decay;
};

/// Two-layer ReLU trunk (input -> hidden -> hidden), optional batch norm, and
/// parallel affine heads for mu and log sigma^2.
struct EncoderParams {
  EncoderDims dims;
  diff::Tensor w1, b1;
  diff::Tensor w2, b2;
  diff::Tensor w_mu, b_mu;
  diff::Tensor w_lv, b_lv;
  std::optional<BatchNorm> bn;

  /// Trainable tensors in canonical order: w1 b1 w2 b2 [bn_scale bn_shift]
  /// w_mu b_mu w_lv b_lv.
  std::vector<ParamSlot> trainable();
  std::vector<diff::Tensor> trainable_values() const;
  void set_trainable_values(std::span<const diff::Tensor> values);

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

enum class Mode { Train, Eval };

/// Deterministic for a fixed seed. The mean head is drawn at 0.1 x the fan-in
/// scale so that initial embeddings overlap and the Hellinger similarity has
/// usable gradients; the log-variance head at 0.01 x the fan-in scale with
/// zero bias, so initial sigma^2 is close to 1.
EncoderParams init_encoder(std::uint64_t seed, const EncoderDims& dims, bool batch_norm);

struct BatchStats {
  diff::Tensor mean;      // 1 x hidden
  diff::Tensor variance;  // 1 x hidden, biased
  std::size_t count = 0;
};

struct EncodeResult {
  GaussianBatch embedding;
  std::optional<BatchStats> batch_stats;  // train mode with batch norm only
};

/// Graph-level forward pass. `params` are variables for trainable() in
/// canonical order (see bind_parameters). Running statistics are read, never
/// written.
EncodeResult encode(diff::Graph& graph, const EncoderParams& p, std::span<const diff::Var> params,
                    diff::Var x, Mode mode);

std::vector<diff::Var> bind_parameters(diff::Graph& graph, const EncoderParams& p);

/// Folds batch statistics into the running estimates with the configured
/// momentum; the variance update uses the unbiased batch variance.
void update_running_stats(EncoderParams& p, const BatchStats& stats);

/// Encodes rows of `x`. Train mode with batch norm updates running statistics.
std::vector<ProbEmbedding> encode(EncoderParams& p, const diff::Tensor& x, Mode mode);
/// Eval-mode encode; read-only.
std::vector<ProbEmbedding> encode_eval(const EncoderParams& p, const diff::Tensor& x);

struct ModelConfig {
  std::array<std::size_t, kNumModalities> input_dims{48, 40, 56, 24};
  std::size_t hidden = 64;
  std::size_t embed = 32;
  bool batch_norm = true;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// One encoder per modality.
struct Model {
  ModelConfig config;
  std::array<EncoderParams, kNumModalities> encoders;

  EncoderParams& encoder(Modality m) { return encoders[index_of(m)]; }
  const EncoderParams& encoder(Modality m) const { return encoders[index_of(m)]; }

  friend bool operator==(const Model&, const Model&) = default;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);

}  // namespace probmed
