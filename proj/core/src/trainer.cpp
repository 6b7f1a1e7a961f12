#include "probmed/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

namespace probmed {

using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kNoiseStream = 11;
constexpr std::uint32_t kPairStream = 12;
constexpr std::uint32_t kBatchStream = 13;
constexpr std::uint64_t kValidationSeedOffset = 0x76616c6964ULL;

}  // namespace

void TrainConfig::validate() const {
  weights.validate();
  if (!(lr >= 0.0)) throw std::invalid_argument("TrainConfig: lr must be >= 0");
  if (!(grad_clip > 0.0)) throw std::invalid_argument("TrainConfig: grad_clip must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: betas must lie in [0, 1)");
  }
  if (batch_size < 2) throw std::invalid_argument("TrainConfig: batch_size must be >= 2");
  if (hidden == 0 || embed == 0) throw std::invalid_argument("TrainConfig: hidden and embed must be >= 1");
  double sum = 0.0;
  for (const auto& [pair, w] : effective_pair_weights()) {
    if (pair == kEmergentPair) {
      throw std::invalid_argument("TrainConfig: pair " + to_string(pair) + " is held out from training");
    }
    if (!(w >= 0.0)) throw std::invalid_argument("TrainConfig: pair weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("TrainConfig: pair weights must sum to 1");
}

LossWeights TrainConfig::effective_weights() const {
  LossWeights w = weights;
  if (!sis_enabled) w.beta = 0.0;
  return w;
}

std::map<ModalityPair, double> TrainConfig::effective_pair_weights() const {
  if (!pair_weights.empty()) return pair_weights;
  std::map<ModalityPair, double> out;
  for (const ModalityPair& p : kTrainablePairs) out[p] = 1.0 / static_cast<double>(kTrainablePairs.size());
  return out;
}

AdamWConfig TrainConfig::adamw() const {
  AdamWConfig a;
  a.beta1 = beta1;
  a.beta2 = beta2;
  a.weight_decay = weight_decay;
  return a;
}

ModelConfig model_config_for(const TrainConfig& cfg, const Corpus& corpus) {
  ModelConfig mc;
  mc.hidden = cfg.hidden;
  mc.embed = cfg.embed;
  mc.batch_norm = cfg.bn_enabled;
  std::array<bool, kNumModalities> found{};
  for (Split s : {Split::Train, Split::Valid, Split::Test}) {
    for (const SyntheticRecord& r : corpus.split(s)) {
      for (Modality m : kAllModalities) {
        if (!found[index_of(m)] && r.has_modality(m)) {
          mc.input_dims[index_of(m)] = r.view(m).size();
          found[index_of(m)] = true;
        }
      }
    }
  }
  for (Modality m : kAllModalities) {
    if (!found[index_of(m)]) {
      throw std::invalid_argument("corpus has no record with modality " + std::string(to_string(m)));
    }
  }
  return mc;
}

TrainState init_train_state(const TrainConfig& cfg, const ModelConfig& model_cfg) {
  cfg.validate();
  Model model = init_model(model_cfg, cfg.seed);
  OptimizerState opt = init_optimizer(model);
  return TrainState{cfg, std::move(model), std::move(opt), stream_rng(cfg.seed, kNoiseStream)};
}

StepResult train_step(TrainState& state, const PairBatch& batch) {
  const TrainConfig& cfg = state.config;
  const ModalityPair pair = batch.pair;
  if (pair.first == pair.second) throw std::invalid_argument("train_step: pair needs two distinct modalities");
  EncoderParams& enc1 = state.model.encoder(pair.first);
  EncoderParams& enc2 = state.model.encoder(pair.second);

  Graph g;
  const std::vector<Var> p1 = bind_parameters(g, enc1);
  const std::vector<Var> p2 = bind_parameters(g, enc2);
  const EncodeResult r1 = encode(g, enc1, p1, g.constant(batch.first), Mode::Train);
  const EncodeResult r2 = encode(g, enc2, p2, g.constant(batch.second), Mode::Train);
  const SisNoise n1 = draw_sis_noise(batch.size(), r1.embedding.dim(), state.noise_rng);
  const SisNoise n2 = draw_sis_noise(batch.size(), r2.embedding.dim(), state.noise_rng);
  const PairLoss loss = pair_loss(r1.embedding, r2.embedding, cfg.effective_weights(),
                                  PairLossOptions{cfg.similarity, cfg.negate_similarity}, n1, n2);
  if (!loss.breakdown.all_finite()) {
    std::string ids;
    for (std::size_t i = 0; i < batch.record_ids.size(); ++i)
      ids += (i ? "," : "") + std::to_string(batch.record_ids[i]);
    throw NumericalError("non-finite loss at step " + std::to_string(state.optimizer.step) + " on pair " +
                             to_string(pair) + ", batch " + std::to_string(batch.batch_id) +
                             " (records " + ids + ")",
                         batch.batch_id, batch.record_ids);
  }
  g.backward(loss.total);

  std::vector<Tensor> grads;
  for (const Var& v : p1) grads.push_back(g.grad(v));
  for (const Var& v : p2) grads.push_back(g.grad(v));
  StepResult out;
  out.loss = loss.breakdown;
  out.grad_norm = clip_global_norm(grads, cfg.grad_clip);
  out.clipped_norm = global_norm(grads);
  out.lr = cosine_lr(state.optimizer.step, cfg.total_steps, cfg.lr);

  const AdamWConfig adam = cfg.adamw();
  const std::span<const Tensor> all(grads);
  adamw_step(enc1, state.optimizer.encoders[index_of(pair.first)], all.first(p1.size()), out.lr, adam);
  adamw_step(enc2, state.optimizer.encoders[index_of(pair.second)], all.subspan(p1.size()), out.lr, adam);
  if (r1.batch_stats) update_running_stats(enc1, *r1.batch_stats);
  if (r2.batch_stats) update_running_stats(enc2, *r2.batch_stats);
  ++state.optimizer.step;
  return out;
}

ValidationResult validate_model(const Model& model, std::span<const SyntheticRecord> records,
                                const TrainConfig& cfg, std::uint64_t seed) {
  ValidationResult v;
  RetrievalConfig rc;
  rc.gallery_cap = cfg.val_gallery;
  rc.kind = cfg.similarity;
  std::vector<ModalityPair> pairs;
  for (const ModalityPair& p : kTrainablePairs) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.has_pair(p);
    if (n >= 10) pairs.push_back(p);
  }
  v.rsum = evaluate_retrieval(model, records, pairs, rc).rsum;

  std::mt19937_64 rng(seed);
  double nce = 0.0;
  std::size_t n_batches = 0;
  for (const ModalityPair& p : pairs) {
    std::size_t eligible = 0;
    for (const auto& r : records) eligible += r.has_pair(p);
    PairBatcher batcher(records, p, std::min(cfg.batch_size, eligible));
    for (std::size_t b = 0; b < cfg.val_batches; ++b) {
      const PairBatch batch = batcher.next(rng);
      const auto e1 = encode_eval(model.encoder(p.first), batch.first);
      const auto e2 = encode_eval(model.encoder(p.second), batch.second);
      nce += 0.5 * (info_nce_prob(e1, e2, cfg.similarity, cfg.weights.tau, cfg.negate_similarity) +
                    info_nce_prob(e2, e1, cfg.similarity, cfg.weights.tau, cfg.negate_similarity));
      ++n_batches;
    }
  }
  v.info_nce = n_batches ? nce / static_cast<double>(n_batches) : 0.0;

  double var_sum = 0.0;
  std::size_t var_n = 0;
  for (Modality m : kAllModalities) {
    std::vector<SyntheticRecord> chosen;
    for (const auto& r : records) {
      if (chosen.size() == cfg.val_gallery) break;
      if (r.has_modality(m)) chosen.push_back(r);
    }
    for (const auto& e : embed_records(model, chosen, m)) {
      for (double lv : e.log_var) var_sum += std::exp(lv);
      var_n += e.log_var.size();
    }
  }
  v.mean_variance = var_n ? var_sum / static_cast<double>(var_n) : 0.0;
  return v;
}

std::vector<ModalityPair> sample_pairs(const std::map<ModalityPair, double>& weights, std::size_t steps,
                                       std::mt19937_64& rng) {
  std::vector<std::pair<ModalityPair, double>> cumulative;
  double acc = 0.0;
  for (const auto& [p, w] : weights) {
    if (w <= 0.0) continue;
    acc += w;
    cumulative.push_back({p, acc});
  }
  if (cumulative.empty()) throw std::invalid_argument("sample_pairs: no pair has positive weight");
  std::uniform_real_distribution<double> unit(0.0, acc);
  std::vector<ModalityPair> out;
  out.reserve(steps);
  for (std::size_t s = 0; s < steps; ++s) {
    const double u = unit(rng);
    auto it = std::find_if(cumulative.begin(), cumulative.end(), [u](const auto& c) { return u < c.second; });
    out.push_back(it == cumulative.end() ? cumulative.back().first : it->first);
  }
  return out;
}

TrainResult train(const TrainConfig& cfg, const Corpus& corpus,
                  const std::function<void(const MetricsRow&)>& on_step) {
  TrainState state = init_train_state(cfg, model_config_for(cfg, corpus));
  const auto weights = cfg.effective_pair_weights();

  std::map<ModalityPair, PairBatcher> batchers;
  for (const auto& [pair, w] : weights) {
    if (w > 0.0) batchers.emplace(pair, PairBatcher(corpus.train, pair, cfg.batch_size));
  }
  std::mt19937_64 pair_rng = stream_rng(cfg.seed, kPairStream);
  std::mt19937_64 batch_rng = stream_rng(cfg.seed, kBatchStream);
  const std::vector<ModalityPair> schedule = sample_pairs(weights, cfg.total_steps, pair_rng);
  const std::uint64_t val_seed = cfg.seed + kValidationSeedOffset;

  TrainResult result;
  double best_rsum = 0.0;
  auto run_validation = [&](std::size_t step) {
    ValidationResult v = validate_model(state.model, corpus.valid, cfg, val_seed);
    v.step = step;
    if (result.validation.empty() || v.rsum > best_rsum) {
      best_rsum = v.rsum;
      result.best = state.checkpoint();
      result.best_step = step;
    }
    result.validation.push_back(v);
  };
  run_validation(0);
  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    const ModalityPair pair = schedule[step];
    const PairBatch batch = batchers.at(pair).next(batch_rng);
    const StepResult sr = train_step(state, batch);
    ++result.pair_counts[pair];
    MetricsRow row{step, pair, sr.loss, sr.lr};
    if (on_step) on_step(row);
    result.metrics.push_back(row);
    const std::size_t done = step + 1;
    if ((cfg.eval_every > 0 && done % cfg.eval_every == 0) || done == cfg.total_steps) {
      if (result.validation.back().step != done) run_validation(done);
    }
  }
  result.last = state.checkpoint();
  return result;
}

void write_metrics_csv(std::span<const MetricsRow> rows, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open metrics file: " + path.string());
  out << "step,pair,total,mod_f,mod_b,sis1,sis2,vib1,vib2,lr\n";
  char buf[64];
  auto num = [&](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  for (const MetricsRow& r : rows) {
    const LossBreakdown& l = r.loss;
    out << r.step << ',' << to_string(r.pair) << ',' << num(l.total) << ',' << num(l.mod_forward) << ','
        << num(l.mod_backward) << ',' << num(l.sis_m1) << ',' << num(l.sis_m2) << ',' << num(l.vib_m1) << ','
        << num(l.vib_m2) << ',' << num(r.lr) << '\n';
  }
  if (!out) throw std::runtime_error("failed writing metrics file: " + path.string());
}

}  // namespace probmed
