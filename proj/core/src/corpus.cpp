#include "probmed/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace probmed {

using diff::Tensor;
using nlohmann::json;

namespace {

constexpr std::array<Modality, 3> kNonText = {Modality::A, Modality::B, Modality::C};

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

std::vector<double> normal_vector(std::size_t n, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = stddev * normal(rng);
  return v;
}

// Largest-remainder allocation of `n` items to the given weights.
std::vector<std::size_t> quotas(const std::vector<double>& weights, std::size_t n) {
  std::vector<std::size_t> q(weights.size());
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t used = 0;
  for (std::size_t c = 0; c < weights.size(); ++c) {
    const double exact = weights[c] * static_cast<double>(n);
    q[c] = static_cast<std::size_t>(std::floor(exact));
    used += q[c];
    rem.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (std::size_t i = 0; used < n; ++i, ++used) ++q[rem[i % rem.size()].second];
  return q;
}

template <class T>
void shuffle_in_place(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

}  // namespace

void CorpusConfig::validate() const {
  const double total = train_fraction + valid_fraction + test_fraction;
  if (train_fraction < 0 || valid_fraction < 0 || test_fraction < 0 || std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument("CorpusConfig: split fractions must be >= 0 and sum to 1");
  }
  if (n_classes == 0) throw std::invalid_argument("CorpusConfig: n_classes must be >= 1");
  if (latent_dim == 0) throw std::invalid_argument("CorpusConfig: latent_dim must be >= 1");
  for (double s : noise_scales)
    if (!(s >= 0.0)) throw std::invalid_argument("CorpusConfig: noise scales must be >= 0");
  for (std::size_t d : view_dims)
    if (d == 0) throw std::invalid_argument("CorpusConfig: view dims must be >= 1");
  if (!(noise_spread >= 1.0)) throw std::invalid_argument("CorpusConfig: noise_spread must be >= 1");
  if (text_variants < 2) throw std::invalid_argument("CorpusConfig: need >= 2 text variants");
  if (!class_weights.empty()) {
    if (class_weights.size() != n_classes) {
      throw std::invalid_argument("CorpusConfig: class_weights must have n_classes entries");
    }
    const double sum = std::accumulate(class_weights.begin(), class_weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("CorpusConfig: class_weights must sum to 1");
  }
  for (const auto& [pair, p] : pair_availability) {
    if (pair == kEmergentPair) {
      throw std::invalid_argument("CorpusConfig: the emergent pair " + to_string(pair) +
                                  " cannot be available for training");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("CorpusConfig: availability must be in [0, 1]");
  }
  if (complementary_ab && (n_classes != 4 || latent_dim < 2)) {
    throw std::invalid_argument("CorpusConfig: complementary_ab needs n_classes = 4 and latent_dim >= 2");
  }
}

double CorpusConfig::effective_variant_offset() const {
  return variant_offset_norm >= 0.0 ? variant_offset_norm : 0.5 * noise_scales[index_of(Modality::Text)];
}

std::vector<double> CorpusConfig::effective_class_weights() const {
  if (!class_weights.empty()) return class_weights;
  return std::vector<double>(n_classes, 1.0 / static_cast<double>(n_classes));
}

bool SyntheticRecord::has_pair(ModalityPair pair) const {
  return std::find(available_pairs.begin(), available_pairs.end(), pair) != available_pairs.end();
}

bool SyntheticRecord::has_modality(Modality m) const {
  if (m == Modality::Text) return !text_variants.empty();
  return views.count(m) != 0;
}

const std::vector<double>& SyntheticRecord::view(Modality m, std::size_t variant) const {
  if (m == Modality::Text) {
    if (variant >= text_variants.size()) {
      throw std::out_of_range("record " + std::to_string(record_id) + " has no text variant " +
                              std::to_string(variant));
    }
    return text_variants[variant];
  }
  const auto it = views.find(m);
  if (it == views.end()) {
    throw std::out_of_range("record " + std::to_string(record_id) + " has no view for modality " +
                            std::string(to_string(m)));
  }
  return it->second;
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Valid: return "valid";
    case Split::Test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "valid") return Split::Valid;
  if (name == "test") return Split::Test;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

const std::vector<SyntheticRecord>& Corpus::split(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Valid: return valid;
    case Split::Test: return test;
  }
  return train;
}

std::vector<SyntheticRecord>& Corpus::split(Split s) {
  return const_cast<std::vector<SyntheticRecord>&>(std::as_const(*this).split(s));
}

SyntheticWorld::SyntheticWorld(const CorpusConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t k = cfg_.latent_dim;
  std::mt19937_64 rng = derived_rng(seed, 1, 0);
  if (cfg_.complementary_ab) {
    // Class c encodes factors u = c & 1 (first half) and v = c >> 1 (second half).
    const double level = 0.5 * cfg_.cluster_separation;
    for (int c = 0; c < 4; ++c) {
      std::vector<double> center(k);
      for (std::size_t o = 0; o < k; ++o) {
        const bool first_half = o < k / 2;
        const int bit = first_half ? (c & 1) : (c >> 1);
        center[o] = bit ? level : -level;
      }
      centers_.push_back(std::move(center));
    }
  } else {
    for (std::size_t c = 0; c < cfg_.n_classes; ++c)
      centers_.push_back(normal_vector(k, cfg_.cluster_separation, rng));
  }

  for (Modality m : kAllModalities) {
    std::mt19937_64 prng(cfg_.projection_seeds[index_of(m)]);
    Tensor w = Tensor(cfg_.view_dims[index_of(m)], k);
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(k)));
    for (double& x : w.data()) x = normal(prng);
    if (cfg_.complementary_ab && (m == Modality::A || m == Modality::B)) {
      for (std::size_t r = 0; r < w.rows(); ++r)
        for (std::size_t o = 0; o < k; ++o) {
          const bool first_half = o < k / 2;
          if ((m == Modality::A) != first_half) w(r, o) = 0.0;
        }
    }
    projections_[index_of(m)] = std::move(w);
  }

  const std::size_t text_dim = cfg_.view_dims[index_of(Modality::Text)];
  const double offset_norm = cfg_.effective_variant_offset();
  for (std::size_t v = 0; v < cfg_.text_variants; ++v) {
    std::vector<double> dir = normal_vector(text_dim, 1.0, rng);
    double norm = 0.0;
    for (double x : dir) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : dir) x = norm > 0.0 ? offset_norm * x / norm : 0.0;
    offsets_.push_back(std::move(dir));
  }
}

std::vector<double> SyntheticWorld::project(Modality m, std::span<const double> latent) const {
  const Tensor& w = projections_[index_of(m)];
  std::vector<double> out(w.rows(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r)
    for (std::size_t o = 0; o < w.cols(); ++o) out[r] += w(r, o) * latent[o];
  return out;
}

std::vector<double> SyntheticWorld::class_prompt(int cls, double noise_multiplier,
                                                 std::mt19937_64& rng) const {
  std::vector<double> x = project(Modality::Text, center(cls));
  const double scale = cfg_.noise_scales[index_of(Modality::Text)] * noise_multiplier;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : x) v += scale * normal(rng);
  return x;
}

Corpus generate(const CorpusConfig& cfg, std::uint64_t seed) {
  const SyntheticWorld world(cfg, seed);
  const std::size_t n = cfg.n_records;
  const std::size_t k = cfg.latent_dim;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng = derived_rng(seed, 2, 0);
  shuffle_in_place(order, split_rng);
  const auto n_train = static_cast<std::size_t>(std::llround(cfg.train_fraction * static_cast<double>(n)));
  const auto n_valid = std::min(n - n_train, static_cast<std::size_t>(
                                                 std::llround(cfg.valid_fraction * static_cast<double>(n))));

  std::vector<Split> split_of(n);
  std::vector<int> label_of(n);
  const std::vector<double> weights = cfg.effective_class_weights();
  const std::size_t bounds[4] = {0, n_train, n_train + n_valid, n};
  for (int s = 0; s < 3; ++s) {
    std::vector<int> labels;
    const auto q = quotas(weights, bounds[s + 1] - bounds[s]);
    for (std::size_t c = 0; c < q.size(); ++c) labels.insert(labels.end(), q[c], static_cast<int>(c));
    shuffle_in_place(labels, split_rng);
    for (std::size_t i = bounds[s]; i < bounds[s + 1]; ++i) {
      split_of[order[i]] = static_cast<Split>(s);
      label_of[order[i]] = labels[i - bounds[s]];
    }
  }

  const double spread_log = std::log(cfg.noise_spread);
  Corpus corpus;
  for (std::size_t id = 0; id < n; ++id) {
    std::mt19937_64 rng = derived_rng(seed, 3, id);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto noise_multiplier = [&] {
      return spread_log > 0.0 ? std::exp(spread_log * (2.0 * unit(rng) - 1.0)) : 1.0;
    };

    SyntheticRecord r;
    r.record_id = static_cast<std::int64_t>(id);
    r.class_label = label_of[id];
    r.latent = normal_vector(k, cfg.cluster_spread, rng);
    const auto& center = world.center(r.class_label);
    for (std::size_t o = 0; o < k; ++o) r.latent[o] += center[o];

    const Split split = split_of[id];
    if (split == Split::Test) {
      r.available_pairs.assign(kTrainablePairs.begin(), kTrainablePairs.end());
      r.available_pairs.push_back(kEmergentPair);
    } else {
      for (const auto& [pair, p] : cfg.pair_availability)
        if (unit(rng) < p) r.available_pairs.push_back(pair);
      if (r.available_pairs.empty()) r.available_pairs.push_back(kTrainablePairs[0]);
    }
    std::sort(r.available_pairs.begin(), r.available_pairs.end());

    std::set<Modality> needed;
    for (const ModalityPair& p : r.available_pairs) {
      needed.insert(p.first);
      needed.insert(p.second);
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Modality m : kNonText) {
      if (!needed.count(m)) continue;
      std::vector<double> x = world.project(m, r.latent);
      const double scale = cfg.noise_scales[index_of(m)] * noise_multiplier();
      for (double& v : x) v += scale * normal(rng);
      r.views[m] = std::move(x);
    }
    if (needed.count(Modality::Text)) {
      const std::vector<double> base = world.project(Modality::Text, r.latent);
      for (std::size_t v = 0; v < cfg.text_variants; ++v) {
        std::vector<double> x = base;
        const auto& offset = world.variant_offset(v);
        const double scale = cfg.noise_scales[index_of(Modality::Text)] * noise_multiplier();
        for (std::size_t j = 0; j < x.size(); ++j) x[j] += offset[j] + scale * normal(rng);
        r.text_variants.push_back(std::move(x));
      }
    }
    corpus.split(split).push_back(std::move(r));
  }
  return corpus;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open corpus file for writing: " + path.string());
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    for (const SyntheticRecord& r : corpus.split(s)) {
      json j;
      j["record_id"] = r.record_id;
      j["split"] = std::string(to_string(s));
      j["class_label"] = r.class_label;
      j["concept"] = r.latent;
      json views = json::object();
      for (const auto& [m, v] : r.views) views[std::string(to_string(m))] = v;
      j["views"] = std::move(views);
      j["text_variants"] = r.text_variants;
      json pairs = json::array();
      for (const ModalityPair& p : r.available_pairs) pairs.push_back(to_string(p));
      j["available_pairs"] = std::move(pairs);
      out << j.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing corpus file: " + path.string());
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path.string());
  Corpus corpus;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      SyntheticRecord r;
      r.record_id = j.at("record_id").get<std::int64_t>();
      r.class_label = j.at("class_label").get<int>();
      r.latent = j.at("concept").get<std::vector<double>>();
      for (const auto& [key, value] : j.at("views").items())
        r.views[parse_modality(key)] = value.get<std::vector<double>>();
      r.text_variants = j.at("text_variants").get<std::vector<std::vector<double>>>();
      for (const auto& p : j.at("available_pairs")) r.available_pairs.push_back(parse_pair(p.get<std::string>()));
      for (const ModalityPair& p : r.available_pairs) {
        for (Modality m : {p.first, p.second}) {
          if (!r.has_modality(m)) {
            throw std::invalid_argument("pair " + to_string(p) + " listed without a view for " +
                                        std::string(to_string(m)));
          }
        }
      }
      corpus.split(parse_split(j.at("split").get<std::string>())).push_back(std::move(r));
    } catch (const CorpusFormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw CorpusFormatError(line_no, e.what());
    }
  }
  return corpus;
}

Tensor stack_views(std::span<const SyntheticRecord> records, Modality m, std::size_t variant) {
  if (records.empty()) return Tensor();
  const std::size_t d = records.front().view(m, variant).size();
  Tensor x(records.size(), d);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& v = records[i].view(m, variant);
    if (v.size() != d) throw diff::ShapeError("stack_views: ragged feature vectors");
    std::copy(v.begin(), v.end(), x.row_span(i).begin());
  }
  return x;
}

std::vector<int> labels_of(std::span<const SyntheticRecord> records) {
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.class_label);
  return out;
}

PairBatcher::PairBatcher(std::span<const SyntheticRecord> records, ModalityPair pair,
                         std::size_t batch_size, std::optional<ModalityPair> forbidden)
    : records_(records), pair_(pair), batch_size_(batch_size) {
  if (forbidden && (pair == *forbidden || ModalityPair{pair.second, pair.first} == *forbidden)) {
    throw std::invalid_argument("PairBatcher: pair " + to_string(pair) +
                                " is held out and must never be batched for training");
  }
  for (std::size_t i = 0; i < records.size(); ++i)
    if (records[i].has_pair(pair)) eligible_.push_back(i);
  if (batch_size == 0 || eligible_.size() < batch_size) {
    throw std::invalid_argument("PairBatcher: " + std::to_string(eligible_.size()) +
                                " records have pair " + to_string(pair) + " but batch size is " +
                                std::to_string(batch_size));
  }
}

PairBatch PairBatcher::next(std::mt19937_64& rng) {
  // Partial Fisher-Yates over the eligible indices.
  for (std::size_t i = 0; i < batch_size_; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, eligible_.size() - 1);
    std::swap(eligible_[i], eligible_[pick(rng)]);
  }
  PairBatch b;
  b.pair = pair_;
  b.batch_id = next_id_++;
  const SyntheticRecord& first = records_[eligible_[0]];
  b.first = Tensor(batch_size_, first.view(pair_.first).size());
  b.second = Tensor(batch_size_, first.view(pair_.second).size());
  for (std::size_t i = 0; i < batch_size_; ++i) {
    const SyntheticRecord& r = records_[eligible_[i]];
    b.record_ids.push_back(r.record_id);
    auto pick_variant = [&](Modality m) -> std::size_t {
      if (m != Modality::Text) return 0;
      std::uniform_int_distribution<std::size_t> v(0, r.text_variants.size() - 1);
      return v(rng);
    };
    const auto& x1 = r.view(pair_.first, pick_variant(pair_.first));
    const auto& x2 = r.view(pair_.second, pick_variant(pair_.second));
    std::copy(x1.begin(), x1.end(), b.first.row_span(i).begin());
    std::copy(x2.begin(), x2.end(), b.second.row_span(i).begin());
  }
  return b;
}

std::string corpus_manifest_json(const Corpus& corpus, const std::string& checksum) {
  json j;
  j["checksum"] = checksum;
  j["total_records"] = corpus.size();
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    const auto& recs = corpus.split(s);
    const std::string name(to_string(s));
    j["records"][name] = recs.size();
    std::map<std::string, std::size_t> pair_counts;
    std::map<std::string, std::size_t> class_counts;
    for (const auto& r : recs) {
      for (const auto& p : r.available_pairs) ++pair_counts[to_string(p)];
      ++class_counts[std::to_string(r.class_label)];
    }
    j["pairs"][name] = pair_counts;
    j["classes"][name] = class_counts;
  }
  return j.dump(2);
}

std::string file_checksum(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file for checksum: " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << h;
  return out.str();
}

}  // namespace probmed
