#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "probmed/checkpoint.hpp"
#include "probmed/encoder.hpp"
#include "probmed/ops.hpp"
#include "probmed/optimizer.hpp"

using namespace probmed;
using diff::Tensor;

namespace {

Tensor random_inputs(std::size_t n, std::size_t d, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Tensor t(n, d);
  for (double& v : t.data()) v = g(rng);
  return t;
}

}  // namespace

TEST(Encoder, ZeroWeightsGiveStandardEmbedding) {
  auto p = init_encoder(1, {6, 8, 4}, false);
  for (auto& slot : p.trainable()) slot.value->fill(0.0);
  std::mt19937_64 rng(2);
  for (const auto& e : encode_eval(p, random_inputs(3, 6, rng))) {
    for (double v : e.mu) EXPECT_EQ(v, 0.0);
    for (double v : e.log_var) EXPECT_EQ(v, 0.0);
  }
}

TEST(Encoder, EvalModeIsDeterministic) {
  auto p = init_encoder(3, {6, 8, 4}, true);
  std::mt19937_64 rng(4);
  const Tensor x = random_inputs(5, 6, rng);
  EXPECT_EQ(encode_eval(p, x), encode_eval(p, x));
}

TEST(Encoder, Errors) {
  auto p = init_encoder(5, {6, 8, 4}, true);
  std::mt19937_64 rng(6);
  EXPECT_THROW(encode_eval(p, random_inputs(2, 7, rng)), diff::ShapeError);
  EXPECT_THROW(encode(p, random_inputs(1, 6, rng), Mode::Train), std::invalid_argument);
  EXPECT_THROW(init_encoder(1, {0, 8, 4}, false), std::invalid_argument);
}

TEST(Encoder, TrainModeBatchNormStandardizes) {
  // Identity mean head exposes the normalized hidden features directly.
  auto p = init_encoder(7, {6, 8, 8}, true);
  p.w_mu = Tensor::identity(8);
  std::mt19937_64 rng(8);
  const Tensor x = random_inputs(32, 6, rng);
  diff::Graph g;
  const auto params = bind_parameters(g, p);
  const auto r = encode(g, p, params, g.constant(x), Mode::Train);
  ASSERT_TRUE(r.batch_stats.has_value());
  const Tensor& z = r.embedding.mu.value();
  for (std::size_t j = 0; j < 8; ++j) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < 32; ++i) m += z(i, j);
    m /= 32;
    for (std::size_t i = 0; i < 32; ++i) v += (z(i, j) - m) * (z(i, j) - m);
    v /= 32;
    const double var = r.batch_stats->variance[j];
    EXPECT_NEAR(m, 0.0, 1e-6);
    EXPECT_NEAR(v, var / (var + p.bn->eps), 1e-6);
    if (var > 1e-1) {
      EXPECT_NEAR(v, 1.0, 1e-4);
    }
  }
}

TEST(Encoder, RunningStatsStayPositive) {
  auto p = init_encoder(9, {6, 8, 4}, true);
  std::mt19937_64 rng(10);
  for (int i = 0; i < 20; ++i) encode(p, random_inputs(16, 6, rng), Mode::Train);
  for (double v : p.bn->running_var.data()) EXPECT_GT(v, 0.0);
  for (const auto& t : p.trainable_values()) EXPECT_TRUE(t.all_finite());
}

TEST(Encoder, InitIsSeeded) {
  EXPECT_EQ(init_encoder(11, {6, 8, 4}, true), init_encoder(11, {6, 8, 4}, true));
  EXPECT_NE(init_encoder(11, {6, 8, 4}, true), init_encoder(12, {6, 8, 4}, true));
}

TEST(Encoder, InitialLogVarianceIsSmall) {
  auto p = init_encoder(13, {48, 64, 32}, false);
  std::mt19937_64 rng(14);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& e : encode_eval(p, random_inputs(200, 48, rng)))
    for (double v : e.log_var) {
      total += std::abs(v);
      ++count;
    }
  EXPECT_LT(total / count, 0.5);
}

TEST(Optimizer, CosineSchedule) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-4), 1e-4);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-4), 0.0, 1e-20);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-4), 0.5e-4, 1e-18);
  EXPECT_DOUBLE_EQ(cosine_lr(0, 0, 3e-4), 3e-4);
  EXPECT_THROW(cosine_lr(101, 100, 1e-4), std::invalid_argument);
}

TEST(Optimizer, ZeroLearningRateLeavesParameters) {
  Model m = init_model(ModelConfig{{6, 5, 4, 3}, 8, 4, true}, 1);
  OptimizerState st = init_optimizer(m);
  auto& enc = m.encoder(Modality::A);
  const auto before = enc.trainable_values();
  std::vector<Tensor> grads;
  for (const auto& t : before) grads.emplace_back(t.rows(), t.cols(), 0.3);
  adamw_step(enc, st.encoders[0], grads, 0.0, AdamWConfig{});
  EXPECT_EQ(enc.trainable_values(), before);
}

TEST(Optimizer, ClipBelowThresholdIsIdentity) {
  std::vector<Tensor> g{Tensor::row({0.3, 0.4})};
  const auto copy = g;
  EXPECT_DOUBLE_EQ(clip_global_norm(g, 1.0), 0.5);
  EXPECT_EQ(g, copy);
  std::vector<Tensor> big{Tensor::row({3.0, 4.0})};
  EXPECT_DOUBLE_EQ(clip_global_norm(big, 1.0), 5.0);
  EXPECT_NEAR(global_norm(big), 1.0, 1e-15);
}

TEST(Optimizer, FirstStepMovesByLearningRate) {
  Model m = init_model(ModelConfig{{6, 5, 4, 3}, 8, 4, false}, 2);
  OptimizerState st = init_optimizer(m);
  auto& enc = m.encoder(Modality::B);
  const auto before = enc.trainable_values();
  std::vector<Tensor> grads;
  for (const auto& t : before) grads.emplace_back(t.rows(), t.cols(), 2.0);
  AdamWConfig cfg;
  cfg.weight_decay = 0.0;
  adamw_step(enc, st.encoders[1], grads, 1e-3, cfg);
  const auto after = enc.trainable_values();
  for (std::size_t i = 0; i < before.size(); ++i)
    for (std::size_t j = 0; j < before[i].size(); ++j)
      EXPECT_NEAR(before[i][j] - after[i][j], 1e-3, 1e-9);
}

TEST(Optimizer, DecaySkipsBiases) {
  Model m = init_model(ModelConfig{{6, 5, 4, 3}, 8, 4, true}, 3);
  OptimizerState st = init_optimizer(m);
  auto& enc = m.encoder(Modality::C);
  enc.b1.fill(1.0);
  enc.bn->scale.fill(1.0);
  const Tensor w1 = enc.w1;
  std::vector<Tensor> grads;
  for (const auto& t : enc.trainable_values()) grads.emplace_back(t.rows(), t.cols(), 0.0);
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  adamw_step(enc, st.encoders[2], grads, 1.0, cfg);
  EXPECT_EQ(enc.b1[0], 1.0);
  EXPECT_EQ(enc.bn->scale[0], 1.0);
  EXPECT_NEAR(enc.w1[0], w1[0] * 0.9, 1e-15);
}

TEST(Checkpoint, RoundTripsBitExactly) {
  Model m = init_model(ModelConfig{{6, 5, 4, 3}, 8, 4, true}, 4);
  std::mt19937_64 rng(5);
  encode(m.encoder(Modality::A), random_inputs(8, 6, rng), Mode::Train);
  OptimizerState st = init_optimizer(m);
  st.step = 17;
  st.encoders[0].step = 9;
  st.encoders[0].first_moment[0].fill(0.125);
  const Checkpoint ck{m, st};
  const std::string bytes = serialize_checkpoint(ck);
  EXPECT_EQ(deserialize_checkpoint(bytes), ck);

  const auto path = std::filesystem::temp_directory_path() / "probmed_ckpt_test.bin";
  save_checkpoint(ck, path);
  EXPECT_EQ(load_checkpoint(path), ck);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsCorruptBytes) {
  Model m = init_model(ModelConfig{{6, 5, 4, 3}, 8, 4, false}, 6);
  const std::string bytes = serialize_checkpoint({m, init_optimizer(m)});
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() / 2)), CheckpointFormatError);
  EXPECT_THROW(deserialize_checkpoint(bytes + "x"), CheckpointFormatError);
  EXPECT_THROW(deserialize_checkpoint("NOTACKPT" + bytes.substr(8)), CheckpointFormatError);
}
