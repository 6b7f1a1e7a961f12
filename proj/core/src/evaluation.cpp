#include "probmed/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace probmed {

using diff::Tensor;

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[idx[k]] = r;
    i = j + 1;
  }
  return rank;
}

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

Tensor stack_mu(std::span<const ProbEmbedding> items) {
  if (items.empty()) return Tensor();
  Tensor x(items.size(), items.front().dim());
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].dim() != x.cols()) throw diff::ShapeError("embedding dimensions differ");
    std::copy(items[i].mu.begin(), items[i].mu.end(), x.row_span(i).begin());
  }
  return x;
}

Tensor concat_mu(std::span<const ProbEmbedding> a, std::span<const ProbEmbedding> b) {
  const Tensor xa = stack_mu(a);
  const Tensor xb = stack_mu(b);
  Tensor x(xa.rows(), xa.cols() + xb.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::copy(xa.row_span(i).begin(), xa.row_span(i).end(), x.row_span(i).begin());
    std::copy(xb.row_span(i).begin(), xb.row_span(i).end(), x.row_span(i).begin() + xa.cols());
  }
  return x;
}

template <class T>
std::vector<T> pick(std::span<const T> v, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(v[i]);
  return out;
}

std::vector<std::size_t> complement(std::size_t n, std::span<const std::size_t> idx) {
  std::vector<bool> used(n, false);
  for (std::size_t i : idx) used[i] = true;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!used[i]) out.push_back(i);
  return out;
}

std::size_t class_count(std::span<const int> labels) {
  int hi = -1;
  for (int y : labels) {
    if (y < 0) throw std::invalid_argument("negative class label");
    hi = std::max(hi, y);
  }
  return static_cast<std::size_t>(hi + 1);
}

// Fits a probe on support rows and returns one-vs-rest AUROC on test rows.
ClassAuroc probe_auroc(const Tensor& support, std::span<const int> support_labels, const Tensor& test,
                       std::span<const int> test_labels, std::size_t n_classes,
                       const ProbeConfig& cfg) {
  const Standardizer s = Standardizer::fit(support);
  const LinearProbe probe(s.apply(support), support_labels, n_classes, cfg);
  return one_vs_rest_auroc(probe.predict_proba(s.apply(test)), test_labels);
}

}  // namespace

RetrievalResult recall_at_k(const Tensor& sim, std::span<const std::size_t> ground_truth,
                            std::span<const std::size_t> ks) {
  if (ground_truth.size() != sim.rows()) {
    throw std::invalid_argument("recall_at_k: need one ground-truth index per query row");
  }
  if (sim.rows() == 0) throw std::invalid_argument("recall_at_k: no queries");
  for (std::size_t k : ks) {
    if (k == 0 || k > sim.cols()) {
      throw std::invalid_argument("recall_at_k: K = " + std::to_string(k) + " outside gallery of " +
                                  std::to_string(sim.cols()));
    }
  }
  std::vector<std::size_t> ranks(sim.rows());
  for (std::size_t q = 0; q < sim.rows(); ++q) {
    const std::size_t gt = ground_truth[q];
    if (gt >= sim.cols()) throw std::invalid_argument("recall_at_k: ground truth outside gallery");
    const double s = sim(q, gt);
    std::size_t rank = 1;
    for (std::size_t j = 0; j < sim.cols(); ++j)
      if (sim(q, j) > s || (sim(q, j) == s && j < gt)) ++rank;
    ranks[q] = rank;
  }
  RetrievalResult r;
  for (std::size_t k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t x) { return x <= k; });
    r.recall_at[k] = 100.0 * static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  for (const auto& [k, v] : r.recall_at) r.rsum += v;
  return r;
}

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
  double n_pos = 0.0;
  double rank_sum = 0.0;
  const std::vector<double> rank = average_ranks(scores);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
    if (labels[i] == 1) {
      n_pos += 1.0;
      rank_sum += rank[i];
    }
  }
  const double n_neg = static_cast<double>(labels.size()) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) throw std::invalid_argument("auroc: both classes must be present");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

RocCurve roc_curve(std::span<const double> scores, std::span<const int> labels) {
  RocCurve c;
  c.auroc = auroc(scores, labels);
  for (std::size_t i = 0; i < scores.size(); ++i) c.points.push_back({scores[i], labels[i]});
  std::stable_sort(c.points.begin(), c.points.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  return c;
}

ClassAuroc one_vs_rest_auroc(const Tensor& scores, std::span<const int> labels) {
  if (scores.rows() != labels.size()) throw std::invalid_argument("one_vs_rest_auroc: one label per row");
  ClassAuroc out;
  std::vector<double> col(scores.rows());
  std::vector<int> bin(scores.rows());
  for (std::size_t c = 0; c < scores.cols(); ++c) {
    for (std::size_t i = 0; i < scores.rows(); ++i) {
      col[i] = scores(i, c);
      bin[i] = labels[i] == static_cast<int>(c) ? 1 : 0;
    }
    out.per_class.push_back(auroc(col, bin));
  }
  if (out.per_class.empty()) throw std::invalid_argument("one_vs_rest_auroc: no classes");
  out.mean = std::accumulate(out.per_class.begin(), out.per_class.end(), 0.0) /
             static_cast<double>(out.per_class.size());
  return out;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal series of length >= 2");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

PermutationTest permutation_test(const std::function<double(std::span<const int>)>& statistic,
                                 std::span<const int> labels, std::size_t permutations,
                                 std::uint64_t seed) {
  if (permutations == 0) throw std::invalid_argument("permutation_test: need >= 1 permutation");
  PermutationTest t;
  t.observed = statistic(labels);
  std::mt19937_64 rng(seed);
  std::vector<int> shuffled(labels.begin(), labels.end());
  std::size_t at_least = 0;
  double sum = 0.0, sq = 0.0;
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t i = shuffled.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> d(0, i - 1);
      std::swap(shuffled[i - 1], shuffled[d(rng)]);
    }
    const double s = statistic(shuffled);
    sum += s;
    sq += s * s;
    at_least += s >= t.observed;
  }
  const double n = static_cast<double>(permutations);
  t.null_mean = sum / n;
  t.null_std = std::sqrt(std::max(0.0, sq / n - t.null_mean * t.null_mean));
  t.p_value = static_cast<double>(1 + at_least) / (1.0 + n);
  return t;
}

double prompt_uncertainty(const ProbEmbedding& e) {
  if (e.log_var.empty()) throw std::invalid_argument("prompt_uncertainty: empty embedding");
  double s = 0.0;
  for (double lv : e.log_var) s += std::exp(0.5 * lv);
  return s / static_cast<double>(e.log_var.size());
}

ProbEmbedding prototype(std::span<const ProbEmbedding> prompts) {
  if (prompts.empty()) throw std::invalid_argument("prototype: empty prompt set");
  const std::size_t d = prompts.front().dim();
  for (const auto& p : prompts) {
    if (p.dim() != d || p.log_var.size() != d) throw std::invalid_argument("prototype: mixed dimensions");
  }
  const double n = static_cast<double>(prompts.size());
  ProbEmbedding out{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t o = 0; o < d; ++o) {
    bool same_mu = true, same_lv = true;
    double mu = 0.0, var = 0.0;
    for (const auto& p : prompts) {
      same_mu = same_mu && p.mu[o] == prompts.front().mu[o];
      same_lv = same_lv && p.log_var[o] == prompts.front().log_var[o];
      mu += p.mu[o];
      var += std::exp(p.log_var[o]);
    }
    out.mu[o] = same_mu ? prompts.front().mu[o] : mu / n;
    out.log_var[o] = same_lv ? prompts.front().log_var[o] : std::log(var / n);
  }
  return out;
}

std::vector<double> PromptSet::uncertainties(std::size_t cls) const {
  std::vector<double> u;
  for (const auto& p : by_class.at(cls)) u.push_back(prompt_uncertainty(p));
  return u;
}

void PromptSet::validate() const {
  if (by_class.empty()) throw std::invalid_argument("PromptSet: no classes");
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].empty()) throw std::invalid_argument("PromptSet: class " + std::to_string(c) + " has no prompts");
  }
}

PromptSet filter_prompts(const PromptSet& prompts, std::size_t k) {
  prompts.validate();
  PromptSet out;
  for (std::size_t c = 0; c < prompts.n_classes(); ++c) {
    const auto& group = prompts.by_class[c];
    if (k < 1 || k > group.size()) {
      throw std::invalid_argument("filter_prompts: k = " + std::to_string(k) + " outside [1, " +
                                  std::to_string(group.size()) + "] for class " + std::to_string(c));
    }
    const std::vector<double> u = prompts.uncertainties(c);
    std::vector<std::size_t> idx(group.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return u[a] < u[b]; });
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    out.by_class.emplace_back();
    for (std::size_t i : idx) out.by_class.back().push_back(group[i]);
  }
  return out;
}

Tensor zero_shot(std::span<const ProbEmbedding> items, const PromptSet& prompts, SimilarityKind kind) {
  prompts.validate();
  std::vector<ProbEmbedding> protos;
  for (const auto& group : prompts.by_class) protos.push_back(prototype(group));
  return pairwise_similarity(items, protos, kind);
}

Tensor filtered_zero_shot(std::span<const ProbEmbedding> items, const PromptSet& prompts, std::size_t k,
                          SimilarityKind kind) {
  return zero_shot(items, filter_prompts(prompts, k), kind);
}

FilterSweep sweep_prompt_filter(std::span<const ProbEmbedding> items, std::span<const int> labels,
                                const PromptSet& prompts, SimilarityKind kind) {
  prompts.validate();
  std::size_t k_max = prompts.by_class.front().size();
  for (const auto& g : prompts.by_class) k_max = std::min(k_max, g.size());
  FilterSweep sweep;
  sweep.all_prompts_auroc = one_vs_rest_auroc(zero_shot(items, prompts, kind), labels).mean;
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double a = one_vs_rest_auroc(filtered_zero_shot(items, prompts, k, kind), labels).mean;
    sweep.ks.push_back(k);
    sweep.mean_auroc.push_back(a);
    if (k == 1 || a > sweep.best_auroc) {
      sweep.best_auroc = a;
      sweep.best_k = k;
    }
  }
  return sweep;
}

std::string_view to_string(FewShotMode mode) {
  return mode == FewShotMode::MuOnly ? "mu_only" : "sampled";
}

FewShotMode parse_fewshot_mode(std::string_view name) {
  const std::string s = lower(name);
  if (s == "mu_only" || s == "mu-only" || s == "mu") return FewShotMode::MuOnly;
  if (s == "sampled") return FewShotMode::Sampled;
  throw std::invalid_argument("unknown few-shot mode '" + std::string(name) + "' (expected mu_only|sampled)");
}

FewShotResult few_shot(std::span<const ProbEmbedding> support, std::span<const int> support_labels,
                       std::span<const ProbEmbedding> test, std::span<const int> test_labels,
                       std::size_t n_classes, const FewShotConfig& cfg) {
  if (support.size() != support_labels.size() || test.size() != test_labels.size()) {
    throw std::invalid_argument("few_shot: one label per item is required");
  }
  std::vector<bool> seen(n_classes, false);
  for (int y : support_labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes) throw std::invalid_argument("few_shot: label out of range");
    seen[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (!seen[c]) throw std::invalid_argument("few_shot: class " + std::to_string(c) + " missing from support set");
  }
  if (cfg.mode == FewShotMode::Sampled && cfg.samples == 0) {
    throw std::invalid_argument("few_shot: sampled mode needs n >= 1");
  }

  const Tensor support_mu = stack_mu(support);
  const Standardizer s = Standardizer::fit(support_mu);
  Tensor train_x = support_mu;
  std::vector<int> train_y(support_labels.begin(), support_labels.end());
  if (cfg.mode == FewShotMode::Sampled) {
    std::mt19937_64 rng(cfg.seed);
    train_x = Tensor(support.size() * cfg.samples, support_mu.cols());
    train_y.clear();
    std::size_t row = 0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      for (const auto& z : sample(support[i], cfg.samples, rng)) {
        std::copy(z.begin(), z.end(), train_x.row_span(row++).begin());
        train_y.push_back(support_labels[i]);
      }
    }
  }
  const Tensor train_std = s.apply(train_x);
  const LinearProbe probe(train_std, train_y, n_classes, cfg.probe);
  FewShotResult r;
  r.train_accuracy = probe.accuracy(train_std, train_y);
  r.auroc = one_vs_rest_auroc(probe.predict_proba(s.apply(stack_mu(test))), test_labels);
  return r;
}

std::vector<std::size_t> select_support(std::span<const int> labels, std::size_t n_classes,
                                        std::size_t k_shot, std::mt19937_64& rng) {
  if (k_shot == 0) throw std::invalid_argument("select_support: k_shot must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= n_classes) {
      throw std::invalid_argument("select_support: label out of range");
    }
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto& pool = by_class[c];
    if (pool.size() < k_shot) {
      throw std::invalid_argument("select_support: class " + std::to_string(c) + " has " +
                                  std::to_string(pool.size()) + " items, need " + std::to_string(k_shot));
    }
    for (std::size_t i = 0; i < k_shot; ++i) {
      std::uniform_int_distribution<std::size_t> d(i, pool.size() - 1);
      std::swap(pool[i], pool[d(rng)]);
      out.push_back(pool[i]);
    }
  }
  return out;
}

std::string_view to_string(Fusion f) { return f == Fusion::Mean ? "mean" : "max"; }

Fusion parse_fusion(std::string_view name) {
  const std::string s = lower(name);
  if (s == "mean") return Fusion::Mean;
  if (s == "max") return Fusion::Max;
  throw std::invalid_argument("unknown fusion rule '" + std::string(name) + "' (expected mean|max)");
}

MultimodalResult multimodal_classify(std::span<const ProbEmbedding> first,
                                     std::span<const ProbEmbedding> second,
                                     std::span<const int> labels, const PromptSet& prompts,
                                     const MultimodalConfig& cfg) {
  if (first.size() != labels.size() || second.size() != labels.size()) {
    throw std::invalid_argument("multimodal_classify: every item needs both modalities and a label");
  }
  const std::size_t n_classes = std::max(class_count(labels), prompts.n_classes());
  std::mt19937_64 rng(cfg.seed);
  const std::vector<std::size_t> sup = select_support(labels, n_classes, cfg.k_shot, rng);
  const std::vector<std::size_t> rest = complement(labels.size(), sup);
  const std::vector<int> sup_y = pick(labels, std::span<const std::size_t>(sup));
  const std::vector<int> test_y = pick(labels, std::span<const std::size_t>(rest));
  const auto f_sup = pick(first, std::span<const std::size_t>(sup));
  const auto f_test = pick(first, std::span<const std::size_t>(rest));
  const auto s_sup = pick(second, std::span<const std::size_t>(sup));
  const auto s_test = pick(second, std::span<const std::size_t>(rest));

  MultimodalResult r;
  r.fs_first = probe_auroc(stack_mu(f_sup), sup_y, stack_mu(f_test), test_y, n_classes, cfg.probe).mean;
  r.fs_second = probe_auroc(stack_mu(s_sup), sup_y, stack_mu(s_test), test_y, n_classes, cfg.probe).mean;
  r.fs_concat = probe_auroc(concat_mu(f_sup, s_sup), sup_y, concat_mu(f_test, s_test), test_y, n_classes,
                            cfg.probe).mean;

  const Tensor zf = zero_shot(f_test, prompts, cfg.kind);
  const Tensor zs = zero_shot(s_test, prompts, cfg.kind);
  Tensor fused(zf.rows(), zf.cols());
  for (std::size_t i = 0; i < fused.size(); ++i)
    fused[i] = cfg.fusion == Fusion::Mean ? 0.5 * (zf[i] + zs[i]) : std::max(zf[i], zs[i]);
  r.zs_first = one_vs_rest_auroc(zf, test_y).mean;
  r.zs_second = one_vs_rest_auroc(zs, test_y).mean;
  r.zs_fused = one_vs_rest_auroc(fused, test_y).mean;
  return r;
}

NoiseProbeResult uncertainty_noise_probe(const EncoderParams& encoder, const Tensor& items,
                                         std::span<const double> levels, std::uint64_t seed) {
  if (levels.size() < 2 || levels.front() != 0.0) {
    throw std::invalid_argument("uncertainty_noise_probe: need >= 2 levels starting at 0");
  }
  for (std::size_t i = 1; i < levels.size(); ++i) {
    if (!(levels[i] > levels[i - 1])) throw std::invalid_argument("uncertainty_noise_probe: levels must ascend");
  }
  NoiseProbeResult r;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double level : levels) {
    Tensor x = items;
    for (double& v : x.data()) v += level * normal(rng);
    double total = 0.0;
    for (const auto& e : encode_eval(encoder, x)) total += prompt_uncertainty(e);
    r.levels.push_back(level);
    r.mean_uncertainty.push_back(total / static_cast<double>(x.rows()));
  }
  r.spearman = spearman(r.levels, r.mean_uncertainty);
  return r;
}

std::vector<ProbEmbedding> embed_records(const Model& model, std::span<const SyntheticRecord> records,
                                         Modality m, std::size_t variant) {
  if (records.empty()) return {};
  return encode_eval(model.encoder(m), stack_views(records, m, variant));
}

RawPrompts make_prompts(const SyntheticWorld& world, std::size_t n_clean, std::size_t n_noisy,
                        double clean_mult, double noisy_mult, std::uint64_t seed) {
  if (n_clean + n_noisy == 0) throw std::invalid_argument("make_prompts: need at least one prompt per class");
  std::mt19937_64 rng(seed);
  RawPrompts out(world.config().complementary_ab ? 4 : world.config().n_classes);
  for (std::size_t c = 0; c < out.size(); ++c) {
    for (std::size_t i = 0; i < n_clean; ++i)
      out[c].push_back(world.class_prompt(static_cast<int>(c), clean_mult, rng));
    for (std::size_t i = 0; i < n_noisy; ++i)
      out[c].push_back(world.class_prompt(static_cast<int>(c), noisy_mult, rng));
  }
  return out;
}

PromptSet encode_prompts(const Model& model, const RawPrompts& raw) {
  PromptSet set;
  for (const auto& group : raw) {
    if (group.empty()) throw std::invalid_argument("encode_prompts: class without prompts");
    Tensor x(group.size(), group.front().size());
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i].size() != x.cols()) throw diff::ShapeError("encode_prompts: ragged prompt features");
      std::copy(group[i].begin(), group[i].end(), x.row_span(i).begin());
    }
    set.by_class.push_back(encode_eval(model.encoder(Modality::Text), x));
  }
  return set;
}

RetrievalReport evaluate_retrieval(const Model& model, std::span<const SyntheticRecord> records,
                                   std::span<const ModalityPair> pairs, const RetrievalConfig& cfg) {
  RetrievalReport report;
  for (const ModalityPair& pair : pairs) {
    std::vector<SyntheticRecord> chosen;
    for (const auto& r : records) {
      if (chosen.size() == cfg.gallery_cap) break;
      if (r.has_modality(pair.first) && r.has_modality(pair.second)) chosen.push_back(r);
    }
    const auto a = embed_records(model, chosen, pair.first);
    const auto b = embed_records(model, chosen, pair.second);
    std::vector<std::size_t> gt(chosen.size());
    std::iota(gt.begin(), gt.end(), 0);
    PairRetrieval pr;
    pr.pair = pair;
    pr.forward = recall_at_k(pairwise_similarity(a, b, cfg.kind), gt, cfg.ks);
    pr.backward = recall_at_k(pairwise_similarity(b, a, cfg.kind), gt, cfg.ks);
    report.rsum += pr.forward.rsum + pr.backward.rsum;
    report.pairs.push_back(std::move(pr));
  }
  return report;
}

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["protocol"] = protocol;
  j["metrics"] = metrics;
  j["series"] = series;
  return j.dump(2);
}

void EvalReport::add_retrieval(const RetrievalReport& r) {
  for (const PairRetrieval& p : r.pairs) {
    const std::string name = to_string(p.pair);
    for (const auto& [k, v] : p.forward.recall_at) metrics[name + ".forward.R@" + std::to_string(k)] = v;
    for (const auto& [k, v] : p.backward.recall_at) metrics[name + ".backward.R@" + std::to_string(k)] = v;
  }
  metrics["rsum"] = r.rsum;
}

}  // namespace probmed
