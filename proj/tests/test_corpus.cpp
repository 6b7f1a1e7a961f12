#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "probmed/corpus.hpp"
#include "probmed/evaluation.hpp"
#include "probmed/probe.hpp"

using namespace probmed;

namespace {

CorpusConfig small_config(std::size_t n = 600) {
  CorpusConfig cfg;
  cfg.n_records = n;
  return cfg;
}

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST(CorpusConfig, Validation) {
  EXPECT_NO_THROW(CorpusConfig{}.validate());
  CorpusConfig bad;
  bad.train_fraction = 0.9;
  EXPECT_THROW(bad.validate(), std::invalid_argument);
  CorpusConfig neg;
  neg.noise_scales[2] = -0.1;
  EXPECT_THROW(neg.validate(), std::invalid_argument);
}

TEST(Generate, DeterministicForSeed) {
  const auto cfg = small_config();
  EXPECT_EQ(generate(cfg, 3), generate(cfg, 3));
  EXPECT_NE(generate(cfg, 3), generate(cfg, 4));
}

TEST(Generate, RecordInvariants) {
  const Corpus c = generate(small_config(), 5);
  std::set<std::int64_t> ids;
  for (auto split : {Split::Train, Split::Valid, Split::Test}) {
    for (const auto& r : c.split(split)) {
      EXPECT_TRUE(ids.insert(r.record_id).second) << "splits must be record-disjoint";
      bool any_text = false;
      for (const auto& p : r.available_pairs) {
        for (Modality m : {p.first, p.second}) {
          if (m != Modality::Text) {
            EXPECT_TRUE(r.views.count(m));
          }
        }
        any_text = any_text || p.involves(Modality::Text);
      }
      if (any_text) {
        EXPECT_GE(r.text_variants.size(), 2u);
      }
      const bool has_emergent = r.has_pair(kEmergentPair);
      EXPECT_EQ(has_emergent, split == Split::Test);
    }
  }
  EXPECT_EQ(c.size(), 600u);
  EXPECT_EQ(c.train.size(), 480u);
  EXPECT_EQ(c.test.size(), 60u);
}

TEST(Generate, ZeroNoiseVariantsDifferOnlyByOffsets) {
  auto cfg = small_config(50);
  cfg.noise_scales = {0.0, 0.0, 0.0, 0.0};
  cfg.variant_offset_norm = 0.5;
  const SyntheticWorld world(cfg, 9);
  const Corpus c = generate(cfg, 9);
  const auto& r = c.test.front();
  const auto& v0 = r.text_variants[0];
  const auto& v1 = r.text_variants[1];
  for (std::size_t i = 0; i < v0.size(); ++i) {
    EXPECT_NEAR(v1[i] - v0[i], world.variant_offset(1)[i] - world.variant_offset(0)[i], 1e-12);
  }
}

TEST(Generate, LatentClassesAreLinearlySeparable) {
  const Corpus c = generate(small_config(1000), 11);
  auto to_tensor = [](const std::vector<SyntheticRecord>& rs) {
    diff::Tensor t(rs.size(), rs.front().latent.size());
    for (std::size_t i = 0; i < rs.size(); ++i)
      for (std::size_t j = 0; j < t.cols(); ++j) t(i, j) = rs[i].latent[j];
    return t;
  };
  const auto xtr = to_tensor(c.train);
  const auto xte = to_tensor(c.test);
  const auto s = Standardizer::fit(xtr);
  const LinearProbe probe(s.apply(xtr), labels_of(c.train), 5);
  const auto scores = probe.predict_proba(s.apply(xte));
  EXPECT_GT(one_vs_rest_auroc(scores, labels_of(c.test)).mean, 0.95);
}

TEST(CorpusIo, RoundTrips) {
  const auto path = temp_file("probmed_corpus_test.jsonl");
  const Corpus empty;
  write_corpus(empty, path);
  EXPECT_EQ(std::filesystem::file_size(path), 0u);
  EXPECT_EQ(read_corpus(path), empty);

  const Corpus full = generate(small_config(300), 13);
  Corpus one;
  one.test.push_back(full.test.front());
  write_corpus(one, path);
  EXPECT_EQ(read_corpus(path), one);

  write_corpus(full, path);
  const Corpus back = read_corpus(path);
  EXPECT_EQ(back, full);
  EXPECT_EQ(back.train.size(), full.train.size());
  std::filesystem::remove(path);
}

TEST(CorpusIo, MalformedLineNamesLine) {
  const auto path = temp_file("probmed_bad_corpus.jsonl");
  const Corpus c = generate(small_config(20), 15);
  write_corpus(c, path);
  {
    std::ofstream out(path, std::ios::app);
    out << "{not json\n";
  }
  try {
    read_corpus(path);
    FAIL() << "expected CorpusFormatError";
  } catch (const CorpusFormatError& e) {
    EXPECT_EQ(e.line(), 21u);
  }
  std::filesystem::remove(path);
}

TEST(Batcher, FullAvailabilityGivesEveryRecord) {
  const Corpus c = generate(small_config(), 17);
  const ModalityPair pair{Modality::A, Modality::Text};
  std::size_t eligible = 0;
  for (const auto& r : c.train) eligible += r.has_pair(pair);
  PairBatcher batcher(c.train, pair, eligible);
  std::mt19937_64 rng(1);
  const auto batch = batcher.next(rng);
  std::set<std::int64_t> ids(batch.record_ids.begin(), batch.record_ids.end());
  EXPECT_EQ(ids.size(), eligible);
}

TEST(Batcher, BatchesHoldOnlyEligibleRecords) {
  const Corpus c = generate(small_config(), 19);
  std::map<std::int64_t, const SyntheticRecord*> by_id;
  for (const auto& r : c.train) by_id[r.record_id] = &r;
  std::mt19937_64 rng(2);
  for (const auto& pair : kTrainablePairs) {
    PairBatcher batcher(c.train, pair, 16);
    for (int i = 0; i < 10; ++i) {
      const auto b = batcher.next(rng);
      EXPECT_EQ(b.first.rows(), 16u);
      for (auto id : b.record_ids) EXPECT_TRUE(by_id.at(id)->has_pair(pair));
    }
  }
}

TEST(Batcher, TextVariantsChangeWithRng) {
  const Corpus c = generate(small_config(), 21);
  const ModalityPair pair{Modality::A, Modality::Text};
  PairBatcher batcher(c.train, pair, 32);
  std::mt19937_64 r1(5), r2(5);
  const auto b1 = batcher.next(r1);
  PairBatcher batcher2(c.train, pair, 32);
  auto b2 = batcher2.next(r2);
  EXPECT_EQ(b1.second, b2.second);
  std::mt19937_64 r3(6);
  PairBatcher batcher3(c.train, pair, 32);
  EXPECT_NE(batcher3.next(r3).second, b1.second);
}

TEST(Batcher, Errors) {
  const Corpus c = generate(small_config(100), 23);
  EXPECT_THROW(PairBatcher(c.train, {Modality::A, Modality::Text}, 10000), std::invalid_argument);
  EXPECT_THROW(PairBatcher(c.test, kEmergentPair, 2), std::invalid_argument);
}

TEST(Manifest, ChecksumIsStable) {
  const auto path = temp_file("probmed_manifest_test.jsonl");
  write_corpus(generate(small_config(100), 25), path);
  const auto a = file_checksum(path);
  write_corpus(generate(small_config(100), 25), path);
  EXPECT_EQ(file_checksum(path), a);
  EXPECT_EQ(a.size(), 16u);
  std::filesystem::remove(path);
}
