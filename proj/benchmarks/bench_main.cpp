#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "probmed/encoder.hpp"
#include "probmed/geometry.hpp"
#include "probmed/losses.hpp"
#include "probmed/trainer.hpp"

using namespace probmed;

namespace {

std::vector<ProbEmbedding> random_embeddings(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<ProbEmbedding> out(n);
  for (auto& e : out)
    for (std::size_t i = 0; i < d; ++i) {
      e.mu.push_back(g(rng));
      e.log_var.push_back(0.3 * g(rng));
    }
  return out;
}

void BM_PairwiseSimilarity(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto kind = static_cast<SimilarityKind>(state.range(1));
  const auto a = random_embeddings(n, 32, 1);
  const auto b = random_embeddings(n, 32, 2);
  for (auto _ : state) benchmark::DoNotOptimize(pairwise_similarity(a, b, kind));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n));
  state.SetLabel(std::string(to_string(kind)));
}
BENCHMARK(BM_PairwiseSimilarity)
    ->ArgsProduct({{64, 256, 1000},
                   {static_cast<int>(SimilarityKind::Hellinger), static_cast<int>(SimilarityKind::CSD),
                    static_cast<int>(SimilarityKind::Cosine)}})
    ->Unit(benchmark::kMicrosecond);

void BM_PairLossBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto m1 = random_embeddings(n, 32, 3);
  const auto m2 = random_embeddings(n, 32, 4);
  std::mt19937_64 rng(5);
  const SisNoise s1 = draw_sis_noise(n, 32, rng);
  const SisNoise s2 = draw_sis_noise(n, 32, rng);
  for (auto _ : state) {
    diff::Graph g;
    const auto loss = pair_loss(parameter_batch(g, m1), parameter_batch(g, m2), LossWeights{}, {}, s1, s2);
    g.backward(loss.total);
    benchmark::DoNotOptimize(loss.breakdown.total);
  }
}
BENCHMARK(BM_PairLossBackward)->Arg(16)->Arg(64)->Unit(benchmark::kMicrosecond);

void BM_EncodeEval(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto enc = init_encoder(1, {48, 64, 32}, true);
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g;
  diff::Tensor x(n, 48);
  for (double& v : x.data()) v = g(rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_eval(enc, x));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_EncodeEval)->Arg(64)->Arg(1000)->Unit(benchmark::kMicrosecond);

void BM_TrainStep(benchmark::State& state) {
  CorpusConfig cc;
  cc.n_records = 1000;
  const Corpus corpus = generate(cc, 1);
  TrainConfig cfg;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  TrainState ts = init_train_state(cfg, model_config_for(cfg, corpus));
  PairBatcher batcher(corpus.train, {Modality::A, Modality::Text}, cfg.batch_size);
  std::mt19937_64 rng(7);
  for (auto _ : state) {
    if (ts.optimizer.step >= cfg.total_steps) ts.optimizer.step = 0;
    benchmark::DoNotOptimize(train_step(ts, batcher.next(rng)).loss.total);
  }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
