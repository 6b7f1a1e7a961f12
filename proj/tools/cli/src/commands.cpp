#include "probmed/cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "probmed/checkpoint.hpp"
#include "probmed/cli/protocols.hpp"
#include "probmed/corpus.hpp"
#include "probmed/trainer.hpp"

namespace probmed::cli {

namespace fs = std::filesystem;

namespace {

RunConfig load_config(const CommonOptions& common) {
  if (common.config_path.empty()) throw ConfigError("--config is required");
  RunConfig cfg = load_run_config(common.config_path);
  if (common.seed) {
    cfg.seed = *common.seed;
    cfg.train.seed = *common.seed;
  }
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

Corpus load_corpus(const std::string& flag, const RunConfig& cfg) {
  const std::string path = !flag.empty() ? flag : cfg.paths.corpus;
  if (path.empty()) throw ConfigError("no corpus given (use --corpus or paths.corpus)");
  if (!fs::exists(path)) throw ConfigError("corpus file '" + path + "' does not exist");
  return read_corpus(path);
}

std::string num(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace

fs::path make_run_dir(const std::string& command, const CommonOptions& common, const RunConfig& cfg) {
  fs::path dir;
  if (!common.run_dir.empty()) {
    dir = common.run_dir;
  } else {
    fs::path base = "runs";
    if (!cfg.paths.report_dir.empty()) {
      base = cfg.paths.report_dir;
    } else if (const char* env = std::getenv(kReportDirEnv); env && *env) {
      base = env;
    }
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream stamp;
    stamp << command << '-' << std::put_time(&tm, "%Y%m%d-%H%M%S");
    dir = base / stamp.str();
    for (int n = 1; fs::exists(dir); ++n) dir = base / (stamp.str() + "-" + std::to_string(n));
  }
  fs::create_directories(dir);
  return dir;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size()) throw ConfigError("expected a comma-separated list of integers, got '" + text + "'");
    out.push_back(static_cast<std::size_t>(v));
  }
  if (out.empty()) throw ConfigError("empty list '" + text + "'");
  return out;
}

double corrupted_hellinger_sq(const ProbEmbedding& a, const ProbEmbedding& b) {
  double t = 0.0;
  for (std::size_t o = 0; o < a.dim(); ++o) {
    const double va = std::exp(a.log_var[o]);
    const double vb = std::exp(b.log_var[o]);
    const double s = va + vb;
    const double d = a.mu[o] - b.mu[o];
    t += 0.5 * std::log(2.0 * std::sqrt(va * vb) / s) + d * d / (4.0 * s);
  }
  return -std::expm1(t);
}

int cmd_gen(const GenOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const RunConfig cfg = load_config(opt.common);
    cfg.validate();
    const fs::path dir = make_run_dir("gen", opt.common, cfg);
    const fs::path corpus_path = !opt.out.empty() ? fs::path(opt.out)
                                 : !cfg.paths.corpus.empty() ? fs::path(cfg.paths.corpus)
                                                             : dir / "corpus.jsonl";
    if (corpus_path.has_parent_path()) fs::create_directories(corpus_path.parent_path());
    const Corpus corpus = generate(cfg.corpus, cfg.seed);
    write_corpus(corpus, corpus_path);
    const std::string manifest = corpus_manifest_json(corpus, file_checksum(corpus_path));
    write_text(dir / "manifest.json", manifest + "\n");
    write_text(dir / "effective_config.json", to_json(cfg));
    out << "corpus: " << corpus_path.string() << " (" << corpus.train.size() << " train, " << corpus.valid.size()
        << " valid, " << corpus.test.size() << " test)\n"
        << "manifest: " << (dir / "manifest.json").string() << "\n";
    return kExitOk;
  });
}

int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunConfig cfg = load_config(opt.common);
    if (opt.similarity) {
      try {
        cfg.train.similarity = parse_similarity(*opt.similarity);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
    if (opt.steps) cfg.train.total_steps = *opt.steps;
    if (opt.lr) cfg.train.lr = *opt.lr;
    if (opt.batch_size) cfg.train.batch_size = *opt.batch_size;
    if (opt.sis) cfg.train.sis_enabled = *opt.sis;
    if (opt.bn) cfg.train.bn_enabled = *opt.bn;
    cfg.validate();
    const Corpus corpus = load_corpus(opt.corpus, cfg);
    const fs::path dir = make_run_dir("train", opt.common, cfg);
    write_text(dir / "effective_config.json", to_json(cfg));

    TrainResult result;
    try {
      result = train(cfg.train, corpus);
    } catch (const NumericalError& e) {
      nlohmann::json diag = {{"error", e.what()}, {"batch_id", e.batch_id()}, {"record_ids", e.record_ids()}};
      write_text(dir / "numerical_failure.json", diag.dump(2) + "\n");
      throw;
    }
    save_checkpoint(result.best, dir / "checkpoint.bin");
    save_checkpoint(result.last, dir / "checkpoint_last.bin");
    if (!cfg.paths.checkpoint.empty()) {
      const fs::path shared(cfg.paths.checkpoint);
      if (shared.has_parent_path()) fs::create_directories(shared.parent_path());
      save_checkpoint(result.best, shared);
    }
    write_metrics_csv(result.metrics, dir / "metrics.csv");
    std::ostringstream val;
    val << "step,rsum,info_nce,mean_variance\n";
    for (const auto& v : result.validation)
      val << v.step << ',' << num(v.rsum) << ',' << num(v.info_nce) << ',' << num(v.mean_variance) << '\n';
    write_text(dir / "validation.csv", val.str());
    const auto& first = result.validation.front();
    const auto& last = result.validation.back();
    out << "trained " << cfg.train.total_steps << " steps (" << to_string(cfg.train.similarity) << ")\n"
        << "validation RSUM " << first.rsum << " -> " << last.rsum << ", InfoNCE " << first.info_nce << " -> "
        << last.info_nce << "\n"
        << "best checkpoint (step " << result.best_step << "): " << (dir / "checkpoint.bin").string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunConfig cfg = load_config(opt.common);
    try {
      if (opt.protocol) cfg.eval.protocol = *opt.protocol;
      if (opt.similarity) cfg.eval.similarity = parse_similarity(*opt.similarity);
      if (opt.fewshot_mode) cfg.eval.fewshot_mode = parse_fewshot_mode(*opt.fewshot_mode);
      if (opt.fusion) cfg.eval.fusion = parse_fusion(*opt.fusion);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (opt.n) cfg.eval.fewshot_samples = *opt.n;
    if (opt.shots) cfg.eval.shots = *opt.shots;
    if (opt.filter_prompts) {
      cfg.eval.filter_prompts = *opt.filter_prompts == "all"
                                    ? cfg.eval.prompts_clean + cfg.eval.prompts_noisy
                                    : parse_size_list(*opt.filter_prompts).front();
    }
    cfg.validate();
    const std::string ckpt_path = !opt.checkpoint.empty() ? opt.checkpoint : cfg.paths.checkpoint;
    if (ckpt_path.empty()) throw ConfigError("no checkpoint given (use --checkpoint or paths.checkpoint)");
    if (!fs::exists(ckpt_path)) throw ConfigError("checkpoint '" + ckpt_path + "' does not exist");
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Corpus corpus = load_corpus(opt.corpus, cfg);
    const fs::path dir = make_run_dir("eval", opt.common, cfg);
    write_text(dir / "effective_config.json", to_json(cfg));
    const EvalReport report = run_protocol(ckpt.model, corpus, cfg);
    write_text(dir / "report.json", report.to_json() + "\n");
    out << "protocol " << report.protocol << "\n";
    for (const auto& [k, v] : report.metrics) out << "  " << k << " = " << v << "\n";
    out << "report: " << (dir / "report.json").string() << "\n";
    return kExitOk;
  });
}

int cmd_verify(const VerifyOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    oracles::Subject subject;
    if (opt.corrupt_hellinger) subject.hellinger_sq = corrupted_hellinger_sq;
    const auto results = oracles::run_suite(subject);
    bool ok = true;
    nlohmann::json j = nlohmann::json::array();
    for (const auto& r : results) {
      ok = ok && r.passed;
      char line[256];
      std::snprintf(line, sizeof line, "%-4s %-55s error %.3e  tolerance %.0e  cases %zu\n",
                    r.passed ? "PASS" : "FAIL", r.name.c_str(), r.error, r.tolerance, r.cases);
      out << line;
      j.push_back({{"name", r.name}, {"error", r.error}, {"tolerance", r.tolerance}, {"cases", r.cases},
                   {"passed", r.passed}});
    }
    if (!opt.run_dir.empty()) {
      fs::create_directories(opt.run_dir);
      write_text(fs::path(opt.run_dir) / "verify.json", j.dump(2) + "\n");
    }
    out << (ok ? "all oracles passed\n" : "ORACLE FAILURE\n");
    return ok ? kExitOk : kExitNumerical;
  });
}

int cmd_ablate(const AblateOptions& opt, std::ostream& out, std::ostream& err) {
  return guarded(err, [&]() -> int {
    RunConfig base = load_config(opt.common);
    if (opt.steps) base.train.total_steps = *opt.steps;
    base.validate();
    struct Variant {
      std::string name;
      RunConfig cfg;
    };
    std::vector<Variant> variants;
    if (opt.grid == "similarity") {
      for (SimilarityKind k : {SimilarityKind::Hellinger, SimilarityKind::Bhattacharyya, SimilarityKind::CSD,
                               SimilarityKind::Cosine}) {
        RunConfig c = base;
        c.train.similarity = k;
        c.eval.similarity.reset();
        variants.push_back({std::string(to_string(k)), c});
      }
    } else if (opt.grid == "sis-bn") {
      for (auto [name, sis, bn] : {std::tuple{"base", false, false}, std::tuple{"+SIS", true, false},
                                   std::tuple{"+BN", false, true}, std::tuple{"+SIS+BN", true, true}}) {
        RunConfig c = base;
        c.train.sis_enabled = sis;
        c.train.bn_enabled = bn;
        variants.push_back({name, c});
      }
    } else {
      throw ConfigError("unknown ablation grid '" + opt.grid + "' (expected similarity|sis-bn)");
    }
    if (opt.seeds.empty()) throw ConfigError("--seeds must not be empty");

    const fs::path dir = make_run_dir("ablate-" + opt.grid, opt.common, base);
    write_text(dir / "effective_config.json", to_json(base));
    std::optional<Corpus> fixed;
    if (!opt.corpus.empty() || !base.paths.corpus.empty()) fixed = load_corpus(opt.corpus, base);

    EvalReport report;
    report.protocol = "ablation." + opt.grid;
    std::ostringstream table;
    table << "variant,seed,rsum,val_info_nce\n";
    for (std::uint64_t seed : opt.seeds) {
      const Corpus corpus = fixed ? *fixed : generate(base.corpus, seed);
      for (Variant& v : variants) {
        v.cfg.seed = seed;
        v.cfg.train.seed = seed;
        const TrainResult tr = train(v.cfg.train, corpus);
        const EvalReport rr = run_retrieval(tr.best.model, corpus, v.cfg);
        const double rsum = rr.metrics.at("rsum");
        const double nce = tr.validation.back().info_nce;
        report.series[v.name + ".rsum"].push_back(rsum);
        table << v.name << ',' << seed << ',' << num(rsum) << ',' << num(nce) << '\n';
        out << std::left << std::setw(14) << v.name << " seed " << seed << "  RSUM " << std::fixed
            << std::setprecision(1) << rsum << std::defaultfloat << "\n";
      }
    }
    for (const Variant& v : variants) {
      const auto& s = report.series[v.name + ".rsum"];
      double mean = 0.0;
      for (double x : s) mean += x;
      report.metrics[v.name + ".mean_rsum"] = mean / static_cast<double>(s.size());
    }
    write_text(dir / "ablation.csv", table.str());
    write_text(dir / "report.json", report.to_json() + "\n");
    out << "table: " << (dir / "ablation.csv").string() << "\n";
    return kExitOk;
  });
}

}  // namespace probmed::cli
