// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Trained models are shared between criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "probmed/cli/commands.hpp"
#include "probmed/cli/protocols.hpp"
#include "probmed/cli/run_config.hpp"
#include "probmed/oracles.hpp"
#include "probmed/trainer.hpp"

using namespace probmed;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

struct Line {
  int id;
  std::string title;
  bool passed;
  std::string detail;
};

std::vector<Line> g_lines;

void report(int id, const std::string& title, bool passed, const std::string& detail) {
  g_lines.push_back({id, title, passed, detail});
  std::printf("%s [%02d] %s: %s\n", passed ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr SimilarityKind kKinds[] = {SimilarityKind::Hellinger, SimilarityKind::Bhattacharyya,
                                     SimilarityKind::CSD, SimilarityKind::Cosine};

struct Run {
  Corpus corpus;
  TrainResult result;
  double train_seconds = 0.0;
};

/// Default corpus and 2000-step training with the given similarity; the
/// global seed drives both, as in the command-line tool.
Run train_default(std::uint64_t seed, SimilarityKind kind) {
  Run run;
  run.corpus = generate(CorpusConfig{}, seed);
  TrainConfig cfg;
  cfg.similarity = kind;
  cfg.seed = seed;
  const auto t0 = Clock::now();
  run.result = train(cfg, run.corpus);
  run.train_seconds = seconds_since(t0);
  std::fprintf(stderr, "  trained %s seed %llu in %.1fs\n", std::string(to_string(kind)).c_str(),
               static_cast<unsigned long long>(seed), run.train_seconds);
  return run;
}

double test_rsum(const Model& model, const Corpus& corpus, SimilarityKind kind) {
  RetrievalConfig rc;
  rc.gallery_cap = 1000;
  rc.kind = kind;
  const std::vector<ModalityPair> pairs(kTrainablePairs.begin(), kTrainablePairs.end());
  return evaluate_retrieval(model, corpus.test, pairs, rc).rsum;
}

/// RSUM expected from a random ranking on the validation split: 100 K / G
/// per direction for every trainable pair with >= 10 records.
double chance_rsum(const std::vector<SyntheticRecord>& records, const TrainConfig& cfg) {
  double total = 0.0;
  for (const auto& pair : kTrainablePairs) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.has_pair(pair);
    if (n < 10) continue;
    const double g = static_cast<double>(std::min(n, cfg.val_gallery));
    for (std::size_t k : {1, 5, 10}) total += 2.0 * 100.0 * static_cast<double>(k) / g;
  }
  return total;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PROBMED_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return rc == -1 ? -1 : WEXITSTATUS(rc);
}

/// Criteria 1-3 read the same oracle suite that `probmed verify` runs.
void criteria_oracles() {
  const auto t0 = Clock::now();
  const auto suite = oracles::run_suite();
  const double t_suite = seconds_since(t0);
  const auto& quad = suite[0];
  const auto& id = suite[1];
  const auto& kl = suite[2];
  const auto& cs = suite[3];
  const auto& grad = suite[6];

  report(1, "distance oracles", quad.passed && kl.passed && cs.passed && t_suite < 60.0,
         "hellinger vs quadrature " + fmt("%.2e", quad.error) + " (<1e-6, " + std::to_string(quad.cases) +
             " pairs); vib vs MC KL " + fmt("%.2e", kl.error) + " (<1e-2, " + std::to_string(kl.cases) +
             " cases, 1e6 samples); csd vs MC " + fmt("%.2e", cs.error) + " (<1e-2); suite " +
             fmt("%.1fs", t_suite) + " (<60s)");
  report(2, "Gaussian identity", id.passed,
         "max |H^2 - (1 - exp(-D_B))| = " + fmt("%.2e", id.error) + " (<1e-10) over " +
             std::to_string(id.cases) + " pairs, D in {1,8,64}");
  report(3, "gradient correctness", grad.passed && t_suite < 120.0,
         "max rel error " + fmt("%.2e", grad.error) + " (<1e-4) on " + std::to_string(grad.cases) +
             " 4-item batches, hidden 16, D 8; suite " + fmt("%.1fs", t_suite) + " (<120s)");
}

void criterion_training(const std::map<std::uint64_t, Run>& hellinger) {
  const TrainConfig cfg;
  const double uniform = std::log(static_cast<double>(cfg.batch_size));
  bool ok = true;
  std::string detail;
  for (const auto& [seed, run] : hellinger) {
    const auto& val = run.result.validation;
    const auto& untrained = val.front();
    const auto best = std::max_element(val.begin(), val.end(),
                                       [](const auto& a, const auto& b) { return a.rsum < b.rsum; });
    const double final_nce = val.back().info_nce;
    const double chance = chance_rsum(run.corpus.valid, cfg);
    const double reduction = 1.0 - final_nce / uniform;
    const bool seed_ok =
        reduction >= 0.5 && best->rsum - untrained.rsum >= 3.0 * chance && run.train_seconds < 600.0;
    ok = ok && seed_ok;
    detail += "seed " + std::to_string(seed) + ": NCE " + fmt("%.3f", untrained.info_nce) + " -> " +
              fmt("%.3f", final_nce) + " (" + fmt("%.0f%%", 100.0 * reduction) + " below ln " +
              std::to_string(cfg.batch_size) + "), RSUM " + fmt("%.1f", untrained.rsum) + " -> " +
              fmt("%.1f", best->rsum) + " (need +" + fmt("%.1f", 3.0 * chance) + "), " +
              fmt("%.0fs", run.train_seconds) + "; ";
  }
  report(4, "training efficacy", ok, detail);
}

void criterion_similarity(const std::map<SimilarityKind, std::map<std::uint64_t, Run>>& runs) {
  std::map<SimilarityKind, std::map<std::uint64_t, double>> grid;
  for (const auto& [kind, by_seed] : runs)
    for (const auto& [seed, run] : by_seed) grid[kind][seed] = test_rsum(run.result.best.model, run.corpus, kind);

  std::printf("       similarity grid (test RSUM, gallery <= 1000):\n");
  for (const auto& [kind, by_seed] : grid) {
    std::printf("         %-14s", std::string(to_string(kind)).c_str());
    double mean = 0.0;
    for (const auto& [seed, rsum] : by_seed) {
      std::printf("  seed %llu %8.1f", static_cast<unsigned long long>(seed), rsum);
      mean += rsum / 3.0;
    }
    std::printf("  mean %8.1f\n", mean);
  }
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : kSeeds) {
    const double h = grid[SimilarityKind::Hellinger][seed];
    const double c = grid[SimilarityKind::CSD][seed];
    ok = ok && h >= c;
    detail += "seed " + std::to_string(seed) + " hellinger " + fmt("%.1f", h) + (h >= c ? " >= " : " < ") +
              "csd " + fmt("%.1f", c) + "; ";
  }
  report(5, "similarity ablation direction", ok, detail);
}

void criterion_sis_bn(const fs::path& work) {
  cli::RunConfig cfg;
  cfg.seed = 1;
  cfg.corpus.n_records = 3000;
  cfg.train.total_steps = 150;
  cfg.train.eval_every = 50;
  const fs::path config = work / "ablate.json";
  std::ofstream(config) << cli::to_json(cfg);

  std::string tables[2];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = work / ("ablate-" + std::to_string(rep));
    const int rc = run_cli("ablate --grid sis-bn --seeds 1,2 --config " + config.string() + " --run-dir " +
                           dir.string());
    if (rc != 0) {
      report(6, "SIS/BN ablation harness", false, "probmed ablate exited with " + std::to_string(rc));
      return;
    }
    tables[rep] = slurp(dir / "ablation.csv");
  }
  std::istringstream in(tables[0]);
  std::string line;
  std::getline(in, line);
  std::map<std::string, std::size_t> rows;
  while (std::getline(in, line)) ++rows[line.substr(0, line.find(','))];
  const bool present = rows.size() == 4 && rows.count("base") && rows.count("+SIS") && rows.count("+BN") &&
                       rows.count("+SIS+BN");
  const bool deterministic = tables[0] == tables[1];
  std::printf("       %s", tables[0].c_str());
  report(6, "SIS/BN ablation harness", present && deterministic,
         std::string("variants ") + (present ? "base,+SIS,+BN,+SIS+BN present" : "missing") +
             "; rerun table " + (deterministic ? "byte-identical" : "differs"));
}

void criterion_prompt_filter(const std::map<std::uint64_t, Run>& hellinger) {
  const cli::EvalSettings eval;
  int wins = 0;
  std::string detail;
  for (const auto& [seed, run] : hellinger) {
    const Model& model = run.result.best.model;
    const SyntheticWorld world(CorpusConfig{}, seed);
    const PromptSet prompts = encode_prompts(
        model, make_prompts(world, eval.prompts_clean, eval.prompts_noisy, eval.prompt_clean_noise,
                            eval.prompt_noisy_noise, seed + 101));
    const std::vector<int> labels = labels_of(run.corpus.test);
    std::vector<double> curve;
    for (Modality m : {Modality::A, Modality::B, Modality::C}) {
      const auto items = embed_records(model, run.corpus.test, m);
      const auto sweep = sweep_prompt_filter(items, labels, prompts, SimilarityKind::Hellinger);
      if (curve.empty()) curve.assign(sweep.mean_auroc.size(), 0.0);
      for (std::size_t i = 0; i < curve.size(); ++i) curve[i] += sweep.mean_auroc[i] / 3.0;
    }
    const double all = curve.back();
    const auto best = std::max_element(curve.begin(), curve.end() - 1);
    const bool win = *best >= all;
    wins += win;
    detail += "seed " + std::to_string(seed) + " best k=" + std::to_string(best - curve.begin() + 1) + " " +
              fmt("%.4f", *best) + (win ? " >= " : " < ") + "all " + fmt("%.4f", all) + "; ";
  }
  report(7, "prompt filtering direction", wins >= 2,
         std::to_string(wins) + "/3 seeds (need 2); k ranges over strict subsets of the 6 prompts; " + detail);
}

void criterion_sampled_fewshot(const Run& run) {
  cli::EvalSettings eval;
  eval.shots = {2, 4};
  eval.fewshot_seeds = 5;
  eval.fewshot_mode = FewShotMode::Sampled;
  eval.fewshot_samples = 16;
  const std::vector<Modality> mods{Modality::A};
  const auto cells = cli::few_shot_grid(run.result.best.model, run.corpus.test, mods, eval, 1);
  bool ok = true;
  std::size_t greater = 0;
  std::string detail;
  for (std::size_t shots : eval.shots) {
    double mu = 0.0, sa = 0.0;
    for (const auto& c : cells) {
      if (c.shots != shots) continue;
      mu += c.mu_only / 5.0;
      sa += c.sampled / 5.0;
      greater += c.sampled > c.mu_only;
    }
    ok = ok && sa >= mu - 0.005;
    detail += std::to_string(shots) + "-shot sampled " + fmt("%.4f", sa) + " vs mu_only " + fmt("%.4f", mu) + "; ";
  }
  ok = ok && greater * 2 > cells.size();
  report(8, "sampling few-shot direction", ok,
         detail + "sampled > mu_only on " + std::to_string(greater) + "/" + std::to_string(cells.size()) + " cells");
}

void criterion_emergent(const std::map<std::uint64_t, Run>& hellinger) {
  bool ok = true;
  std::string detail;
  for (const auto& [seed, run] : hellinger) {
    for (const auto& row : run.result.metrics) ok = ok && !(row.pair == kEmergentPair);
    const auto r = cli::emergent_zero_shot(run.result.best.model, run.corpus.test, Modality::A, Modality::C,
                                           SimilarityKind::Hellinger, 1000, seed);
    ok = ok && r.null_test.p_value < 0.05;
    detail += "seed " + std::to_string(seed) + " AUROC " + fmt("%.4f", r.auroc.mean) + " (null " +
              fmt("%.3f", r.null_test.null_mean) + " +- " + fmt("%.3f", r.null_test.null_std) + ", p " +
              fmt("%.4f", r.null_test.p_value) + "); ";
  }
  report(9, "emergent alignment", ok, detail + "no (A,C) batch seen in training");
}

void criterion_multimodal() {
  CorpusConfig cc;
  cc.complementary_ab = true;
  cc.n_classes = 4;
  const std::uint64_t seed = 1;
  const Corpus corpus = generate(cc, seed);
  TrainConfig tc;
  tc.seed = seed;
  const auto result = train(tc, corpus);
  const Model& model = result.best.model;
  const auto a = embed_records(model, corpus.test, Modality::A);
  const auto b = embed_records(model, corpus.test, Modality::B);
  const auto labels = labels_of(corpus.test);
  const SyntheticWorld world(cc, seed);
  const PromptSet prompts = encode_prompts(model, make_prompts(world, 3, 0, 1.0, 1.0, seed + 101));
  double concat = 0.0, first = 0.0, second = 0.0;
  const int draws = 5;
  for (int s = 0; s < draws; ++s) {
    MultimodalConfig mc;
    mc.k_shot = 16;
    mc.seed = static_cast<std::uint64_t>(s);
    const auto r = multimodal_classify(a, b, labels, prompts, mc);
    concat += r.fs_concat / draws;
    first += r.fs_first / draws;
    second += r.fs_second / draws;
  }
  const bool ok = concat - first >= 0.05 && concat - second >= 0.05;
  report(10, "multimodal gain direction", ok,
         "complementary corpus, 16-shot, mean of " + std::to_string(draws) + " support draws: concat " +
             fmt("%.4f", concat) + ", A " + fmt("%.4f", first) + ", B " + fmt("%.4f", second) + " (need +0.05)");
}

void criterion_noise(const std::map<std::uint64_t, Run>& hellinger) {
  const cli::EvalSettings eval;
  bool ok = true;
  std::string detail;
  for (const auto& [seed, run] : hellinger) {
    const std::vector<SyntheticRecord> items(run.corpus.test.begin(), run.corpus.test.begin() + 100);
    const auto raw = stack_views(items, Modality::A);
    const auto r = uncertainty_noise_probe(run.result.best.model.encoder(Modality::A), raw, eval.noise_levels, seed);
    ok = ok && r.spearman > 0.0;
    detail += "seed " + std::to_string(seed) + " rho " + fmt("%.3f", r.spearman) + " (uncertainty " +
              fmt("%.3f", r.mean_uncertainty.front()) + " -> " + fmt("%.3f", r.mean_uncertainty.back()) + "); ";
  }
  report(11, "uncertainty-noise monotonicity", ok, detail + "100 test items, 10 levels 0..2.25");
}

void criterion_determinism(const fs::path& work) {
  cli::RunConfig cfg;
  cfg.seed = 11;
  cfg.corpus.n_records = 2000;
  cfg.train.total_steps = 60;
  cfg.train.eval_every = 20;
  cfg.eval.gallery_cap = 100;
  std::string files[2][3];
  for (int rep = 0; rep < 2; ++rep) {
    const fs::path dir = work / ("det-" + std::to_string(rep));
    fs::create_directories(dir);
    cfg.paths.corpus = (dir / "corpus.jsonl").string();
    const fs::path config = dir / "config.json";
    std::ofstream(config) << cli::to_json(cfg);
    const std::string c = " --config " + config.string();
    int rc = run_cli("gen" + c + " --run-dir " + (dir / "gen").string());
    if (rc == 0) rc = run_cli("train" + c + " --run-dir " + (dir / "train").string());
    if (rc == 0)
      rc = run_cli("eval" + c + " --protocol zeroshot --filter-prompts all --checkpoint " +
                   (dir / "train" / "checkpoint.bin").string() + " --run-dir " + (dir / "eval").string());
    if (rc != 0) {
      report(12, "determinism", false, "probmed exited with " + std::to_string(rc));
      return;
    }
    files[rep][0] = slurp(dir / "gen" / "manifest.json");
    files[rep][1] = slurp(dir / "train" / "checkpoint.bin");
    files[rep][2] = slurp(dir / "eval" / "report.json");
  }
  const char* names[] = {"manifest", "checkpoint", "report"};
  bool ok = true;
  std::string detail;
  for (int i = 0; i < 3; ++i) {
    const bool same = !files[0][i].empty() && files[0][i] == files[1][i];
    ok = ok && same;
    detail += std::string(names[i]) + (same ? " identical" : " DIFFERS") + " (" +
              std::to_string(files[0][i].size()) + " bytes); ";
  }
  report(12, "determinism", ok, detail + "two separate gen/train/eval processes");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  const fs::path work = fs::temp_directory_path() / "probmed_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  criteria_oracles();

  std::map<SimilarityKind, std::map<std::uint64_t, Run>> runs;
  for (std::uint64_t seed : kSeeds)
    for (SimilarityKind kind : kKinds) runs[kind][seed] = train_default(seed, kind);
  const auto& hellinger = runs[SimilarityKind::Hellinger];

  criterion_training(hellinger);
  criterion_similarity(runs);
  criterion_sis_bn(work);
  criterion_prompt_filter(hellinger);
  criterion_sampled_fewshot(hellinger.at(1));
  criterion_emergent(hellinger);
  criterion_multimodal();
  criterion_noise(hellinger);
  criterion_determinism(work);

  std::size_t passed = 0;
  for (const auto& l : g_lines) passed += l.passed;
  std::printf("acceptance: %zu/%zu criteria passed in %.0fs\n", passed, g_lines.size(), seconds_since(t0));
  fs::remove_all(work);
  return passed == g_lines.size() ? 0 : 1;
}
