#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "probmed/corpus.hpp"
#include "probmed/encoder.hpp"
#include "probmed/geometry.hpp"
#include "probmed/probe.hpp"

namespace probmed {

// ---- ranking and ROC -------------------------------------------------------

struct RetrievalResult {
  std::map<std::size_t, double> recall_at;  // K -> percent of queries
  double rsum = 0.0;
};

/// Rank of the ground truth counts strictly larger similarities plus ties at
/// a lower gallery index.
RetrievalResult recall_at_k(const diff::Tensor& sim, std::span<const std::size_t> ground_truth,
                            std::span<const std::size_t> ks);

/// Mann-Whitney AUROC with ties counted as one half. Labels are 0/1.
double auroc(std::span<const double> scores, std::span<const int> labels);

struct RocCurve {
  std::vector<std::pair<double, int>> points;  // by descending score
  double auroc = 0.0;
};
RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels);

struct ClassAuroc {
  std::vector<double> per_class;
  double mean = 0.0;
};
/// One-vs-rest AUROC of column c of `scores` against labels == c.
ClassAuroc one_vs_rest_auroc(const diff::Tensor& scores, std::span<const int> labels);

/// Spearman rank correlation with average ranks; 0 if either side is constant.
double spearman(std::span<const double> x, std::span<const double> y);

struct PermutationTest {
  double observed = 0.0;
  double null_mean = 0.0;
  double null_std = 0.0;
  double p_value = 1.0;  // (1 + #null >= observed) / (1 + permutations)
};
PermutationTest permutation_test(const std::function<double(std::span<const int>)>& statistic,
                                 std::span<const int> labels, std::size_t permutations,
                                 std::uint64_t seed);

// ---- zero-shot ---------------------------------------------------------------

/// Mean of the standard deviations exp(0.5 log_var) over dimensions.
double prompt_uncertainty(const ProbEmbedding& e);

/// Averages mu and sigma^2 entrywise. Entries on which all inputs agree are
/// copied, so a set of identical prompts yields that prompt exactly.
ProbEmbedding prototype(std::span<const ProbEmbedding> prompts);

/// Encoded text prompts grouped by class.
struct PromptSet {
  std::vector<std::vector<ProbEmbedding>> by_class;

  std::size_t n_classes() const { return by_class.size(); }
  std::vector<double> uncertainties(std::size_t cls) const;
  void validate() const;
};

/// Keeps the k lowest-uncertainty prompts of every class, in original order.
PromptSet filter_prompts(const PromptSet& prompts, std::size_t k);

/// items x classes matrix of similarity(item, class prototype).
diff::Tensor zero_shot(std::span<const ProbEmbedding> items, const PromptSet& prompts,
                       SimilarityKind kind);
diff::Tensor filtered_zero_shot(std::span<const ProbEmbedding> items, const PromptSet& prompts,
                                std::size_t k, SimilarityKind kind);

struct FilterSweep {
  std::vector<std::size_t> ks;
  std::vector<double> mean_auroc;
  std::size_t best_k = 0;
  double best_auroc = 0.0;
  double all_prompts_auroc = 0.0;
};
/// Mean one-vs-rest AUROC for k = 1 .. smallest class prompt count.
FilterSweep sweep_prompt_filter(std::span<const ProbEmbedding> items, std::span<const int> labels,
                                const PromptSet& prompts, SimilarityKind kind);

// ---- few-shot ----------------------------------------------------------------

enum class FewShotMode { MuOnly, Sampled };
std::string_view to_string(FewShotMode mode);
FewShotMode parse_fewshot_mode(std::string_view name);

struct FewShotConfig {
  FewShotMode mode = FewShotMode::MuOnly;
  std::size_t samples = 16;
  ProbeConfig probe;
  std::uint64_t seed = 0;
};

struct FewShotResult {
  ClassAuroc auroc;
  double train_accuracy = 0.0;
};

/// Features are standardized with statistics of the support means in both
/// modes. Sampled mode trains on `samples` reparameterized draws per support
/// item; test items are always scored on mu.
FewShotResult few_shot(std::span<const ProbEmbedding> support, std::span<const int> support_labels,
                       std::span<const ProbEmbedding> test, std::span<const int> test_labels,
                       std::size_t n_classes, const FewShotConfig& cfg);

/// k indices per class drawn without replacement, grouped by class.
std::vector<std::size_t> select_support(std::span<const int> labels, std::size_t n_classes,
                                        std::size_t k_shot, std::mt19937_64& rng);

// ---- multimodal --------------------------------------------------------------

enum class Fusion { Mean, Max };
std::string_view to_string(Fusion f);
Fusion parse_fusion(std::string_view name);

struct MultimodalResult {
  double fs_concat = 0.0;
  double fs_first = 0.0;
  double fs_second = 0.0;
  double zs_fused = 0.0;
  double zs_first = 0.0;
  double zs_second = 0.0;
};

struct MultimodalConfig {
  std::size_t k_shot = 16;
  SimilarityKind kind = SimilarityKind::Hellinger;
  Fusion fusion = Fusion::Mean;
  ProbeConfig probe;
  std::uint64_t seed = 0;
};

/// `first[i]` and `second[i]` are two modalities of item i. A k-shot support
/// set is drawn from the items and the rest are scored. FS probes the mean
/// vectors (concatenated for the fused setting); ZS fuses the two per-modality
/// prototype similarities.
MultimodalResult multimodal_classify(std::span<const ProbEmbedding> first,
                                     std::span<const ProbEmbedding> second,
                                     std::span<const int> labels, const PromptSet& prompts,
                                     const MultimodalConfig& cfg);

// ---- uncertainty vs input noise ------------------------------------------------

struct NoiseProbeResult {
  std::vector<double> levels;
  std::vector<double> mean_uncertainty;
  double spearman = 0.0;
};

/// Adds N(0, level^2) noise to every raw input row, encodes in eval mode and
/// averages prompt_uncertainty over the rows. Levels must ascend from 0.
NoiseProbeResult uncertainty_noise_probe(const EncoderParams& encoder, const diff::Tensor& items,
                                         std::span<const double> levels, std::uint64_t seed);

// ---- model-level helpers ---------------------------------------------------------

std::vector<ProbEmbedding> embed_records(const Model& model, std::span<const SyntheticRecord> records,
                                         Modality m, std::size_t variant = 0);

/// Raw text prompt features per class.
using RawPrompts = std::vector<std::vector<std::vector<double>>>;

/// `n_clean` prompts at noise multiplier `clean_mult` followed by `n_noisy`
/// at `noisy_mult`, for every class of the world.
RawPrompts make_prompts(const SyntheticWorld& world, std::size_t n_clean, std::size_t n_noisy,
                        double clean_mult, double noisy_mult, std::uint64_t seed);
PromptSet encode_prompts(const Model& model, const RawPrompts& raw);

struct RetrievalConfig {
  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t gallery_cap = 200;
  SimilarityKind kind = SimilarityKind::Hellinger;
};

struct PairRetrieval {
  ModalityPair pair;
  RetrievalResult forward;   // queries from pair.first
  RetrievalResult backward;  // queries from pair.second
};

struct RetrievalReport {
  std::vector<PairRetrieval> pairs;
  double rsum = 0.0;
};

/// For each pair, the first `gallery_cap` records having it (text variant 0)
/// form queries and gallery; both directions are scored.
RetrievalReport evaluate_retrieval(const Model& model, std::span<const SyntheticRecord> records,
                                   std::span<const ModalityPair> pairs, const RetrievalConfig& cfg);

/// Named scalar metrics and series, serialized as JSON with round-trip doubles.
struct EvalReport {
  std::string protocol;
  std::map<std::string, double> metrics;
  std::map<std::string, std::vector<double>> series;

  std::string to_json() const;
  void add_retrieval(const RetrievalReport& r);
};

}  // namespace probmed
