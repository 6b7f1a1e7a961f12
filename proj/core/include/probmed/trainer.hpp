#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "probmed/checkpoint.hpp"
#include "probmed/corpus.hpp"
#include "probmed/evaluation.hpp"
#include "probmed/losses.hpp"
#include "probmed/optimizer.hpp"

namespace probmed {

struct TrainConfig {
  LossWeights weights;
  SimilarityKind similarity = SimilarityKind::Hellinger;
  bool negate_similarity = false;
  std::size_t batch_size = 64;
  std::size_t total_steps = 2000;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double grad_clip = 1.0;
  bool bn_enabled = true;
  /// When false the SIS weight is forced to 0.
  bool sis_enabled = true;
  std::uint64_t seed = 0;
  std::size_t hidden = 64;
  std::size_t embed = 32;
  /// Empty means uniform over the four trainable pairs.
  std::map<ModalityPair, double> pair_weights;
  std::size_t eval_every = 250;
  std::size_t val_gallery = 200;
  std::size_t val_batches = 4;

  void validate() const;
  LossWeights effective_weights() const;
  std::map<ModalityPair, double> effective_pair_weights() const;
  AdamWConfig adamw() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Raised when a step produces a non-finite loss; carries the offending batch.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::uint64_t batch_id, std::vector<std::int64_t> record_ids)
      : std::runtime_error(what), batch_id_(batch_id), record_ids_(std::move(record_ids)) {}
  std::uint64_t batch_id() const { return batch_id_; }
  const std::vector<std::int64_t>& record_ids() const { return record_ids_; }

 private:
  std::uint64_t batch_id_;
  std::vector<std::int64_t> record_ids_;
};

struct TrainState {
  TrainConfig config;
  Model model;
  OptimizerState optimizer;
  std::mt19937_64 noise_rng;

  Checkpoint checkpoint() const { return {model, optimizer}; }
};

TrainState init_train_state(const TrainConfig& cfg, const ModelConfig& model_cfg);
/// Input dims are read from the first record carrying each modality.
ModelConfig model_config_for(const TrainConfig& cfg, const Corpus& corpus);

struct StepResult {
  LossBreakdown loss;
  double lr = 0.0;
  double grad_norm = 0.0;     // before clipping
  double clipped_norm = 0.0;  // after clipping
};

/// Encodes both sides in train mode, backpropagates pair_loss, clips the
/// joint gradient of the two encoders, applies AdamW at the scheduled rate
/// and folds in batch-norm statistics. Other encoders are untouched. Throws
/// NumericalError before any update if the loss is not finite.
StepResult train_step(TrainState& state, const PairBatch& batch);

struct ValidationResult {
  std::size_t step = 0;
  double rsum = 0.0;
  /// Mean over pairs and fixed batches of (forward + backward) / 2 InfoNCE.
  double info_nce = 0.0;
  /// Mean over items and dimensions of sigma^2 for the trainable modalities.
  double mean_variance = 0.0;
};

/// Eval-mode validation over the trainable pairs. Batches and text variants
/// are drawn from `seed`, so repeated calls see identical inputs.
ValidationResult validate_model(const Model& model, std::span<const SyntheticRecord> records,
                                const TrainConfig& cfg, std::uint64_t seed);

struct MetricsRow {
  std::uint64_t step = 0;
  ModalityPair pair;
  LossBreakdown loss;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<MetricsRow> metrics;
  std::vector<ValidationResult> validation;
  std::map<ModalityPair, std::size_t> pair_counts;
  std::size_t best_step = 0;
};

/// Meta pair-sampling loop: each step draws a pair by weight, then a batch of
/// that pair from the training split. Validates at step 0, every
/// `eval_every` steps and at the end; the best validation RSUM is retained
/// (earliest on ties).
TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::function<void(const MetricsRow&)>& on_step = {});

/// Draws `steps` pairs with the configured weights; exposed for sampling checks.
std::vector<ModalityPair> sample_pairs(const std::map<ModalityPair, double>& weights, std::size_t steps,
                                       std::mt19937_64& rng);

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path);

}  // namespace probmed
