#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "probmed/corpus.hpp"
#include "probmed/evaluation.hpp"
#include "probmed/trainer.hpp"

namespace probmed::cli {

/// Bad flags, unreadable or invalid config files. Maps to exit code 1.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalSettings {
  std::string protocol = "retrieval";
  /// Unset means the training similarity.
  std::optional<SimilarityKind> similarity;
  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t gallery_cap = 1000;
  std::size_t prompts_clean = 3;
  std::size_t prompts_noisy = 3;
  double prompt_clean_noise = 1.0;
  double prompt_noisy_noise = 6.0;
  /// Largest k of the prompt-filter sweep; 0 disables the sweep.
  std::size_t filter_prompts = 0;
  FewShotMode fewshot_mode = FewShotMode::MuOnly;
  std::size_t fewshot_samples = 16;
  std::vector<std::size_t> shots{2, 4, 8, 16};
  std::size_t fewshot_seeds = 5;
  std::size_t multimodal_shots = 16;
  Fusion fusion = Fusion::Mean;
  Modality noise_modality = Modality::A;
  std::vector<double> noise_levels{0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25};
  std::size_t noise_items = 100;
  std::size_t permutations = 1000;

  friend bool operator==(const EvalSettings&, const EvalSettings&) = default;
};

struct Paths {
  std::string corpus;
  std::string checkpoint;
  std::string report_dir;

  friend bool operator==(const Paths&, const Paths&) = default;
};

/// Everything one invocation needs. The global seed drives corpus generation,
/// model initialization, training streams and evaluation draws.
struct RunConfig {
  std::uint64_t seed = 7;
  CorpusConfig corpus;
  TrainConfig train;
  EvalSettings eval;
  Paths paths;

  SimilarityKind eval_similarity() const { return eval.similarity.value_or(train.similarity); }
  void validate() const;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// JSON text with every field present; doubles in shortest round-trip form.
std::string to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

}  // namespace probmed::cli
