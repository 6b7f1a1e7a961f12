#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "probmed/cli/commands.hpp"

using namespace probmed::cli;

namespace {

void add_common(CLI::App* cmd, CommonOptions& common, bool config_required = true) {
  auto* c = cmd->add_option("-c,--config", common.config_path, "JSON run config");
  if (config_required) c->required();
  cmd->add_option("--run-dir", common.run_dir, "Exact output directory (default: timestamped under the report dir)");
  cmd->add_option("--seed", common.seed, "Override the global seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic multimodal contrastive learning on synthetic data"};
  app.require_subcommand(1);

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen", "Generate the synthetic corpus and its manifest");
  add_common(gen_cmd, gen.common);
  gen_cmd->add_option("--out", gen.out, "Corpus output path");

  TrainOptions tr;
  auto* train_cmd = app.add_subcommand("train", "Train the four encoders");
  add_common(train_cmd, tr.common);
  train_cmd->add_option("--corpus", tr.corpus, "Corpus JSONL (default: paths.corpus)");
  train_cmd->add_option("--similarity", tr.similarity, "hellinger|bhattacharyya|csd|cosine");
  train_cmd->add_option("--steps", tr.steps, "Total training steps");
  train_cmd->add_option("--lr", tr.lr, "Peak learning rate");
  train_cmd->add_option("--batch-size", tr.batch_size, "Pairs per batch");
  train_cmd->add_option("--sis", tr.sis, "Enable the synthetic instance sampling loss (true|false)");
  train_cmd->add_option("--bn", tr.bn, "Enable batch normalization (true|false)");

  EvalOptions ev;
  std::string shots;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  add_common(eval_cmd, ev.common);
  eval_cmd->add_option("--checkpoint", ev.checkpoint, "Checkpoint file (default: paths.checkpoint)");
  eval_cmd->add_option("--corpus", ev.corpus, "Corpus JSONL (default: paths.corpus)");
  eval_cmd->add_option("--protocol", ev.protocol, "retrieval|zeroshot|fewshot|multimodal|noiseprobe");
  eval_cmd->add_option("--similarity", ev.similarity, "Similarity used for scoring");
  eval_cmd->add_option("--filter-prompts", ev.filter_prompts, "Sweep prompt filtering up to k (or 'all')");
  eval_cmd->add_option("--fewshot-mode", ev.fewshot_mode, "mu_only|sampled");
  eval_cmd->add_option("--n", ev.n, "Samples per support item in sampled mode");
  eval_cmd->add_option("--shots", shots, "Comma-separated shot counts, e.g. 2,4,8,16");
  eval_cmd->add_option("--fusion", ev.fusion, "Multimodal zero-shot fusion: mean|max");

  VerifyOptions ve;
  auto* verify_cmd = app.add_subcommand("verify", "Run the numerical oracle suite");
  verify_cmd->add_option("--run-dir", ve.run_dir, "Also write verify.json here");
  verify_cmd->add_flag("--corrupt-hellinger", ve.corrupt_hellinger, "Check against a deliberately wrong Hellinger");

  AblateOptions ab;
  std::string seeds;
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare ablation variants");
  add_common(ablate_cmd, ab.common);
  ablate_cmd->add_option("--corpus", ab.corpus, "Fixed corpus (default: generate one per seed)");
  ablate_cmd->add_option("--grid", ab.grid, "similarity|sis-bn")->check(CLI::IsMember({"similarity", "sis-bn"}));
  ablate_cmd->add_option("--seeds", seeds, "Comma-separated seeds (default 1,2,3)");
  ablate_cmd->add_option("--steps", ab.steps, "Training steps per run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (!shots.empty()) ev.shots = parse_size_list(shots);
    if (!seeds.empty()) {
      ab.seeds.clear();
      for (std::size_t s : parse_size_list(seeds)) ab.seeds.push_back(s);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  if (*gen_cmd) return cmd_gen(gen, std::cout, std::cerr);
  if (*train_cmd) return cmd_train(tr, std::cout, std::cerr);
  if (*eval_cmd) return cmd_eval(ev, std::cout, std::cerr);
  if (*verify_cmd) return cmd_verify(ve, std::cout, std::cerr);
  if (*ablate_cmd) return cmd_ablate(ab, std::cout, std::cerr);
  return kExitConfig;
}
