#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "probmed/modality.hpp"
#include "probmed/tensor.hpp"

namespace probmed {

struct CorpusConfig {
  std::size_t n_records = 10000;
  std::size_t n_classes = 5;
  std::size_t latent_dim = 16;
  std::array<std::size_t, kNumModalities> view_dims{48, 40, 56, 24};
  std::array<double, kNumModalities> noise_scales{0.3, 0.3, 0.3, 0.3};
  /// Per-view noise multipliers are drawn log-uniformly from
  /// [1 / noise_spread, noise_spread]; 1 gives homogeneous noise.
  double noise_spread = 3.0;
  std::array<std::uint64_t, kNumModalities> projection_seeds{101, 202, 303, 404};
  /// Standard deviation of class centers around the origin.
  double cluster_separation = 2.0;
  /// Within-class standard deviation of the latent vector.
  double cluster_spread = 1.0;
  /// Mixture weights; empty means uniform.
  std::vector<double> class_weights;
  std::size_t text_variants = 3;
  /// Norm of the per-variant text offsets; negative means half the text
  /// noise scale.
  double variant_offset_norm = -1.0;
  std::map<ModalityPair, double> pair_availability{
      {{Modality::A, Modality::Text}, 0.8},
      {{Modality::B, Modality::Text}, 0.7},
      {{Modality::C, Modality::Text}, 0.15},
      {{Modality::A, Modality::B}, 0.35}};
  double train_fraction = 0.8;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
  /// Four classes from two binary latent factors; A observes only the first,
  /// B only the second half of the latent space.
  bool complementary_ab = false;

  void validate() const;
  double effective_variant_offset() const;
  std::vector<double> effective_class_weights() const;

  friend bool operator==(const CorpusConfig&, const CorpusConfig&) = default;
};

/// One synthetic instance. Views exist for every non-text modality named in
/// `available_pairs`; text variants exist when any text pair is available.
struct SyntheticRecord {
  std::int64_t record_id = 0;
  int class_label = 0;
  std::vector<double> latent;
  std::map<Modality, std::vector<double>> views;
  std::vector<std::vector<double>> text_variants;
  std::vector<ModalityPair> available_pairs;

  bool has_pair(ModalityPair pair) const;
  bool has_modality(Modality m) const;
  /// Feature vector of `m`; for Text, the given variant.
  const std::vector<double>& view(Modality m, std::size_t variant = 0) const;

  friend bool operator==(const SyntheticRecord&, const SyntheticRecord&) = default;
};

enum class Split { Train, Valid, Test };
std::string_view to_string(Split s);
Split parse_split(std::string_view name);

struct Corpus {
  std::vector<SyntheticRecord> train;
  std::vector<SyntheticRecord> valid;
  std::vector<SyntheticRecord> test;

  const std::vector<SyntheticRecord>& split(Split s) const;
  std::vector<SyntheticRecord>& split(Split s);
  std::size_t size() const { return train.size() + valid.size() + test.size(); }

  friend bool operator==(const Corpus&, const Corpus&) = default;
};

/// Fixed generative parameters shared by all records of a corpus: class
/// centers, per-modality projections and text variant offsets.
class SyntheticWorld {
 public:
  SyntheticWorld(const CorpusConfig& cfg, std::uint64_t seed);

  const CorpusConfig& config() const { return cfg_; }
  const std::vector<double>& center(int cls) const { return centers_.at(cls); }
  /// projection(m) * latent, no noise.
  std::vector<double> project(Modality m, std::span<const double> latent) const;
  /// Text feature vector for a class center with noise scaled by
  /// `noise_multiplier`.
  std::vector<double> class_prompt(int cls, double noise_multiplier, std::mt19937_64& rng) const;
  const std::vector<double>& variant_offset(std::size_t v) const { return offsets_.at(v); }

 private:
  CorpusConfig cfg_;
  std::vector<std::vector<double>> centers_;
  std::array<diff::Tensor, kNumModalities> projections_;
  std::vector<std::vector<double>> offsets_;
};

/// Deterministic for a fixed config and seed. Train and valid records never
/// list the emergent pair; test records carry every view and pair.
Corpus generate(const CorpusConfig& cfg, std::uint64_t seed);

class CorpusFormatError : public std::runtime_error {
 public:
  CorpusFormatError(std::size_t line, const std::string& what)
      : std::runtime_error("corpus line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One JSON object per line, doubles in shortest round-trip form.
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

/// Rows of `m` for the given records (text: variant 0).
diff::Tensor stack_views(std::span<const SyntheticRecord> records, Modality m,
                         std::size_t variant = 0);
std::vector<int> labels_of(std::span<const SyntheticRecord> records);

/// A mini-batch of paired raw feature vectors.
struct PairBatch {
  ModalityPair pair;
  std::uint64_t batch_id = 0;
  std::vector<std::int64_t> record_ids;
  diff::Tensor first;
  diff::Tensor second;

  std::size_t size() const { return record_ids.size(); }
};

/// Draws batches of distinct records that all have `pair` available. Text
/// sides use a uniformly chosen variant per record.
class PairBatcher {
 public:
  /// Throws if fewer than `batch_size` records qualify, or if `pair` equals
  /// `forbidden`.
  PairBatcher(std::span<const SyntheticRecord> records, ModalityPair pair, std::size_t batch_size,
              std::optional<ModalityPair> forbidden = kEmergentPair);

  PairBatch next(std::mt19937_64& rng);
  std::size_t eligible() const { return eligible_.size(); }
  ModalityPair pair() const { return pair_; }

 private:
  std::span<const SyntheticRecord> records_;
  ModalityPair pair_;
  std::size_t batch_size_;
  std::vector<std::size_t> eligible_;
  std::uint64_t next_id_ = 0;
};

/// Record counts per split and per (split, pair), plus the given checksum.
std::string corpus_manifest_json(const Corpus& corpus, const std::string& checksum);

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex digits.
std::string file_checksum(const std::filesystem::path& path);

}  // namespace probmed
