#include "probmed/cli/protocols.hpp"

#include <numeric>

namespace probmed::cli {

namespace {

constexpr std::array<Modality, 3> kNonText = {Modality::A, Modality::B, Modality::C};

std::string mod(Modality m) { return std::string(to_string(m)); }

PromptSet prompts_for(const Model& model, const RunConfig& cfg) {
  const SyntheticWorld world(cfg.corpus, cfg.seed);
  return encode_prompts(model, make_prompts(world, cfg.eval.prompts_clean, cfg.eval.prompts_noisy,
                                            cfg.eval.prompt_clean_noise, cfg.eval.prompt_noisy_noise,
                                            cfg.seed + 101));
}

}  // namespace

EmergentResult emergent_zero_shot(const Model& model, std::span<const SyntheticRecord> records,
                                  Modality query_modality, Modality proto_modality, SimilarityKind kind,
                                  std::size_t permutations, std::uint64_t seed) {
  std::vector<SyntheticRecord> proto_half, query_half;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.has_modality(query_modality) || !r.has_modality(proto_modality)) continue;
    (i % 2 == 0 ? proto_half : query_half).push_back(r);
  }
  const auto proto_emb = embed_records(model, proto_half, proto_modality);
  const std::vector<int> proto_labels = labels_of(proto_half);
  const std::size_t n_classes = static_cast<std::size_t>(
      *std::max_element(proto_labels.begin(), proto_labels.end()) + 1);
  PromptSet protos;
  protos.by_class.resize(n_classes);
  for (std::size_t i = 0; i < proto_emb.size(); ++i) protos.by_class[proto_labels[i]].push_back(proto_emb[i]);

  const auto queries = embed_records(model, query_half, query_modality);
  const diff::Tensor scores = zero_shot(queries, protos, kind);
  auto statistic = [&](std::span<const int> labels) { return one_vs_rest_auroc(scores, labels).mean; };
  const std::vector<int> labels = labels_of(query_half);
  EmergentResult r;
  r.auroc = one_vs_rest_auroc(scores, labels);
  r.null_test = permutation_test(statistic, labels, permutations, seed);
  return r;
}

std::vector<FewShotCell> few_shot_grid(const Model& model, std::span<const SyntheticRecord> records,
                                       std::span<const Modality> modalities, const EvalSettings& eval,
                                       std::uint64_t seed) {
  const std::vector<int> labels = labels_of(records);
  const std::size_t n_classes = static_cast<std::size_t>(*std::max_element(labels.begin(), labels.end()) + 1);
  std::vector<FewShotCell> cells;
  for (Modality m : modalities) {
    const auto emb = embed_records(model, records, m);
    for (std::size_t shots : eval.shots) {
      for (std::size_t s = 0; s < eval.fewshot_seeds; ++s) {
        std::mt19937_64 rng(seed * 1000003 + shots * 101 + s);
        const std::vector<std::size_t> sup = select_support(labels, n_classes, shots, rng);
        std::vector<bool> in_support(records.size(), false);
        for (std::size_t i : sup) in_support[i] = true;
        std::vector<ProbEmbedding> se, te;
        std::vector<int> sl, tl;
        for (std::size_t i : sup) {
          se.push_back(emb[i]);
          sl.push_back(labels[i]);
        }
        for (std::size_t i = 0; i < records.size(); ++i) {
          if (in_support[i]) continue;
          te.push_back(emb[i]);
          tl.push_back(labels[i]);
        }
        FewShotCell cell{m, shots, s};
        FewShotConfig fc;
        fc.seed = rng();
        cell.mu_only = few_shot(se, sl, te, tl, n_classes, fc).auroc.mean;
        if (eval.fewshot_mode == FewShotMode::Sampled) {
          fc.mode = FewShotMode::Sampled;
          fc.samples = eval.fewshot_samples;
          cell.sampled = few_shot(se, sl, te, tl, n_classes, fc).auroc.mean;
        }
        cells.push_back(cell);
      }
    }
  }
  return cells;
}

EvalReport run_retrieval(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  RetrievalConfig rc;
  rc.ks = cfg.eval.ks;
  rc.gallery_cap = cfg.eval.gallery_cap;
  rc.kind = cfg.eval_similarity();
  EvalReport report;
  report.protocol = "retrieval";
  report.add_retrieval(evaluate_retrieval(model, corpus.test, kTrainablePairs, rc));
  const std::array<ModalityPair, 1> emergent = {kEmergentPair};
  const RetrievalReport er = evaluate_retrieval(model, corpus.test, emergent, rc);
  for (const auto& [k, v] : er.pairs.front().forward.recall_at)
    report.metrics["emergent." + to_string(kEmergentPair) + ".forward.R@" + std::to_string(k)] = v;
  for (const auto& [k, v] : er.pairs.front().backward.recall_at)
    report.metrics["emergent." + to_string(kEmergentPair) + ".backward.R@" + std::to_string(k)] = v;
  report.metrics["emergent.rsum"] = er.rsum;
  std::size_t gallery = 0;
  for (const auto& r : corpus.test) gallery += r.has_pair(kTrainablePairs[0]);
  report.metrics["gallery_size"] = static_cast<double>(std::min(gallery, rc.gallery_cap));
  return report;
}

EvalReport run_zeroshot(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  EvalReport report;
  report.protocol = "zeroshot";
  const PromptSet prompts = prompts_for(model, cfg);
  const SimilarityKind kind = cfg.eval_similarity();
  const std::vector<int> labels = labels_of(corpus.test);
  for (Modality m : kNonText) {
    const auto items = embed_records(model, corpus.test, m);
    const ClassAuroc a = one_vs_rest_auroc(zero_shot(items, prompts, kind), labels);
    report.metrics["zeroshot." + mod(m) + ".auroc"] = a.mean;
    report.series["zeroshot." + mod(m) + ".per_class_auroc"] = a.per_class;
    if (cfg.eval.filter_prompts > 0) {
      const FilterSweep sweep = sweep_prompt_filter(items, labels, prompts, kind);
      std::vector<double> curve;
      for (std::size_t i = 0; i < sweep.ks.size() && sweep.ks[i] <= cfg.eval.filter_prompts; ++i)
        curve.push_back(sweep.mean_auroc[i]);
      std::size_t best = 0;
      for (std::size_t i = 1; i < curve.size(); ++i)
        if (curve[i] > curve[best]) best = i;
      report.series["zeroshot." + mod(m) + ".filter_curve"] = curve;
      report.metrics["zeroshot." + mod(m) + ".filter.best_k"] = static_cast<double>(best + 1);
      report.metrics["zeroshot." + mod(m) + ".filter.best_auroc"] = curve[best];
    }
  }
  std::vector<double> u;
  for (std::size_t c = 0; c < prompts.n_classes(); ++c)
    for (double x : prompts.uncertainties(c)) u.push_back(x);
  report.series["prompt_uncertainty"] = u;

  const EmergentResult em = emergent_zero_shot(model, corpus.test, kEmergentPair.first, kEmergentPair.second,
                                               kind, cfg.eval.permutations, cfg.seed + 202);
  report.metrics["emergent.auroc"] = em.auroc.mean;
  report.metrics["emergent.null_mean"] = em.null_test.null_mean;
  report.metrics["emergent.null_std"] = em.null_test.null_std;
  report.metrics["emergent.p_value"] = em.null_test.p_value;
  return report;
}

EvalReport run_fewshot(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  EvalReport report;
  report.protocol = "fewshot";
  const auto cells = few_shot_grid(model, corpus.test, kNonText, cfg.eval, cfg.seed);
  const bool sampled = cfg.eval.fewshot_mode == FewShotMode::Sampled;
  for (Modality m : kNonText) {
    std::vector<double> mu_curve, sampled_curve;
    for (std::size_t shots : cfg.eval.shots) {
      double mu = 0.0, sa = 0.0;
      std::size_t n = 0;
      for (const auto& c : cells) {
        if (c.modality != m || c.shots != shots) continue;
        mu += c.mu_only;
        sa += c.sampled;
        ++n;
      }
      const std::string key = "fewshot." + mod(m) + ".shots" + std::to_string(shots);
      report.metrics[key + ".mu_only"] = mu / static_cast<double>(n);
      mu_curve.push_back(mu / static_cast<double>(n));
      if (sampled) {
        report.metrics[key + ".sampled"] = sa / static_cast<double>(n);
        sampled_curve.push_back(sa / static_cast<double>(n));
      }
    }
    report.series["fewshot." + mod(m) + ".mu_only"] = mu_curve;
    if (sampled) report.series["fewshot." + mod(m) + ".sampled"] = sampled_curve;
  }
  std::vector<double> shots(cfg.eval.shots.begin(), cfg.eval.shots.end());
  report.series["fewshot.shots"] = shots;
  return report;
}

EvalReport run_multimodal(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  EvalReport report;
  report.protocol = "multimodal";
  MultimodalConfig mc;
  mc.k_shot = cfg.eval.multimodal_shots;
  mc.kind = cfg.eval_similarity();
  mc.fusion = cfg.eval.fusion;
  mc.seed = cfg.seed + 303;
  const auto a = embed_records(model, corpus.test, Modality::A);
  const auto b = embed_records(model, corpus.test, Modality::B);
  const MultimodalResult r = multimodal_classify(a, b, labels_of(corpus.test), prompts_for(model, cfg), mc);
  report.metrics["fs.A"] = r.fs_first;
  report.metrics["fs.B"] = r.fs_second;
  report.metrics["fs.A+B"] = r.fs_concat;
  report.metrics["zs.A"] = r.zs_first;
  report.metrics["zs.B"] = r.zs_second;
  report.metrics["zs.A+B"] = r.zs_fused;
  return report;
}

EvalReport run_noiseprobe(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  EvalReport report;
  report.protocol = "noiseprobe";
  const Modality m = cfg.eval.noise_modality;
  std::vector<SyntheticRecord> items;
  for (const auto& r : corpus.test) {
    if (items.size() == cfg.eval.noise_items) break;
    if (r.has_modality(m)) items.push_back(r);
  }
  const NoiseProbeResult r =
      uncertainty_noise_probe(model.encoder(m), stack_views(items, m), cfg.eval.noise_levels, cfg.seed + 404);
  report.metrics["spearman"] = r.spearman;
  report.metrics["items"] = static_cast<double>(items.size());
  report.series["levels"] = r.levels;
  report.series["mean_uncertainty"] = r.mean_uncertainty;
  return report;
}

EvalReport run_protocol(const Model& model, const Corpus& corpus, const RunConfig& cfg) {
  const std::string& p = cfg.eval.protocol;
  if (p == "retrieval") return run_retrieval(model, corpus, cfg);
  if (p == "zeroshot") return run_zeroshot(model, corpus, cfg);
  if (p == "fewshot") return run_fewshot(model, corpus, cfg);
  if (p == "multimodal") return run_multimodal(model, corpus, cfg);
  if (p == "noiseprobe") return run_noiseprobe(model, corpus, cfg);
  throw ConfigError("unknown eval protocol '" + p + "'");
}

}  // namespace probmed::cli
