#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "probmed/cli/run_config.hpp"
#include "probmed/evaluation.hpp"

namespace probmed::cli {

/// Class prototypes from `proto_modality` embeddings of one half of the
/// records score `query_modality` embeddings of the other half; the pair is
/// never trained together. The permutation null shuffles query labels.
struct EmergentResult {
  ClassAuroc auroc;
  PermutationTest null_test;
};
EmergentResult emergent_zero_shot(const Model& model, std::span<const SyntheticRecord> records,
                                  Modality query_modality, Modality proto_modality, SimilarityKind kind,
                                  std::size_t permutations, std::uint64_t seed);

struct FewShotCell {
  Modality modality;
  std::size_t shots = 0;
  std::size_t seed = 0;
  double mu_only = 0.0;
  double sampled = 0.0;  // only when the sampled mode is requested
};
/// One cell per (modality, shots, seed); support drawn from `records`, the
/// rest scored.
std::vector<FewShotCell> few_shot_grid(const Model& model, std::span<const SyntheticRecord> records,
                                       std::span<const Modality> modalities, const EvalSettings& eval,
                                       std::uint64_t seed);

EvalReport run_retrieval(const Model& model, const Corpus& corpus, const RunConfig& cfg);
EvalReport run_zeroshot(const Model& model, const Corpus& corpus, const RunConfig& cfg);
EvalReport run_fewshot(const Model& model, const Corpus& corpus, const RunConfig& cfg);
EvalReport run_multimodal(const Model& model, const Corpus& corpus, const RunConfig& cfg);
EvalReport run_noiseprobe(const Model& model, const Corpus& corpus, const RunConfig& cfg);

/// Dispatches on cfg.eval.protocol. All protocols read the test split.
EvalReport run_protocol(const Model& model, const Corpus& corpus, const RunConfig& cfg);

}  // namespace probmed::cli
