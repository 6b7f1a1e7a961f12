#include "probmed/encoder.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "probmed/ops.hpp"

namespace probmed {

using diff::Graph;
using diff::Tensor;
using diff::Var;

namespace {

Tensor normal_tensor(std::size_t rows, std::size_t cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, stddev);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = normal(rng);
  return t;
}

}  // namespace

std::vector<ParamSlot> EncoderParams::trainable() {
  std::vector<ParamSlot> out{{"w1", &w1, true}, {"b1", &b1, false}, {"w2", &w2, true},
                             {"b2", &b2, false}};
  if (bn) {
    out.push_back({"bn_scale", &bn->scale, false});
    out.push_back({"bn_shift", &bn->shift, false});
  }
  out.push_back({"w_mu", &w_mu, true});
  out.push_back({"b_mu", &b_mu, false});
  out.push_back({"w_lv", &w_lv, true});
  out.push_back({"b_lv", &b_lv, false});
  return out;
}

std::vector<Tensor> EncoderParams::trainable_values() const {
  std::vector<Tensor> out{w1, b1, w2, b2};
  if (bn) {
    out.push_back(bn->scale);
    out.push_back(bn->shift);
  }
  for (const Tensor* t : {&w_mu, &b_mu, &w_lv, &b_lv}) out.push_back(*t);
  return out;
}

void EncoderParams::set_trainable_values(std::span<const Tensor> values) {
  auto slots = trainable();
  if (values.size() != slots.size()) {
    throw std::invalid_argument("set_trainable_values: expected " + std::to_string(slots.size()) +
                                " tensors, got " + std::to_string(values.size()));
  }
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (!values[i].same_shape(*slots[i].value)) {
      diff::throw_shape_error("set_trainable_values", *slots[i].value, values[i]);
    }
    *slots[i].value = values[i];
  }
}

EncoderParams init_encoder(std::uint64_t seed, const EncoderDims& dims, bool batch_norm) {
  if (dims.input == 0 || dims.hidden == 0 || dims.embed == 0) {
    throw std::invalid_argument("init_encoder: dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  EncoderParams p;
  p.dims = dims;
  const double hidden = static_cast<double>(dims.hidden);
  p.w1 = normal_tensor(dims.input, dims.hidden, std::sqrt(2.0 / static_cast<double>(dims.input)), rng);
  p.b1 = Tensor(1, dims.hidden);
  p.w2 = normal_tensor(dims.hidden, dims.hidden, std::sqrt(2.0 / hidden), rng);
  p.b2 = Tensor(1, dims.hidden);
  p.w_mu = normal_tensor(dims.hidden, dims.embed, 0.1 * std::sqrt(1.0 / hidden), rng);
  p.b_mu = Tensor(1, dims.embed);
  p.w_lv = normal_tensor(dims.hidden, dims.embed, 0.01 * std::sqrt(1.0 / hidden), rng);
  p.b_lv = Tensor(1, dims.embed);
  if (batch_norm) {
    p.bn = BatchNorm{Tensor(1, dims.hidden, 1.0), Tensor(1, dims.hidden), Tensor(1, dims.hidden),
                     Tensor(1, dims.hidden, 1.0)};
  }
  return p;
}

std::vector<Var> bind_parameters(Graph& graph, const EncoderParams& p) {
  std::vector<Var> vars;
  for (const Tensor& t : p.trainable_values()) vars.push_back(graph.parameter(t));
  return vars;
}

EncodeResult encode(Graph& graph, const EncoderParams& p, std::span<const Var> params, Var x,
                    Mode mode) {
  const std::size_t expected = p.bn ? 10 : 8;
  if (params.size() != expected) {
    throw std::invalid_argument("encode: expected " + std::to_string(expected) +
                                " parameter variables, got " + std::to_string(params.size()));
  }
  if (x.cols() != p.dims.input) {
    throw diff::ShapeError("encode: input has " + std::to_string(x.cols()) +
                           " features but the encoder expects " + std::to_string(p.dims.input));
  }
  const std::size_t n = x.rows();
  std::size_t k = 0;
  const Var w1 = params[k++], b1 = params[k++], w2 = params[k++], b2 = params[k++];

  Var h = diff::relu(diff::matmul(x, w1) + b1);
  h = diff::relu(diff::matmul(h, w2) + b2);

  EncodeResult result;
  if (p.bn) {
    const Var scale = params[k++], shift = params[k++];
    if (mode == Mode::Train) {
      if (n < 2) throw std::invalid_argument("encode: train-mode batch norm needs a batch of >= 2");
      const Var mean = diff::col_mean(h);
      const Var centered = h - mean;
      const Var var = diff::col_mean(diff::square(centered));
      h = centered / diff::sqrt(var + p.bn->eps);
      result.batch_stats = BatchStats{mean.value(), var.value(), n};
    } else {
      Tensor inv_std(1, p.dims.hidden);
      for (std::size_t j = 0; j < p.dims.hidden; ++j)
        inv_std[j] = 1.0 / std::sqrt(p.bn->running_var[j] + p.bn->eps);
      h = (h - graph.constant(p.bn->running_mean)) * graph.constant(std::move(inv_std));
    }
    h = h * scale + shift;
  }

  const Var w_mu = params[k++], b_mu = params[k++], w_lv = params[k++], b_lv = params[k++];
  result.embedding.mu = diff::matmul(h, w_mu) + b_mu;
  result.embedding.log_var = diff::matmul(h, w_lv) + b_lv;
  return result;
}

void update_running_stats(EncoderParams& p, const BatchStats& stats) {
  if (!p.bn) return;
  BatchNorm& bn = *p.bn;
  const double unbias =
      stats.count > 1 ? static_cast<double>(stats.count) / static_cast<double>(stats.count - 1) : 1.0;
  for (std::size_t j = 0; j < bn.running_mean.size(); ++j) {
    bn.running_mean[j] = (1.0 - bn.momentum) * bn.running_mean[j] + bn.momentum * stats.mean[j];
    bn.running_var[j] =
        (1.0 - bn.momentum) * bn.running_var[j] + bn.momentum * stats.variance[j] * unbias;
  }
}

std::vector<ProbEmbedding> encode(EncoderParams& p, const Tensor& x, Mode mode) {
  Graph g;
  const std::vector<Var> params = bind_parameters(g, p);
  EncodeResult r = encode(g, p, params, g.constant(x), mode);
  if (r.batch_stats) update_running_stats(p, *r.batch_stats);
  return to_embeddings(r.embedding);
}

std::vector<ProbEmbedding> encode_eval(const EncoderParams& p, const Tensor& x) {
  Graph g;
  std::vector<Var> params;
  for (const Tensor& t : p.trainable_values()) params.push_back(g.constant(t));
  return to_embeddings(encode(g, p, params, g.constant(x), Mode::Eval).embedding);
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  Model m;
  m.config = config;
  std::seed_seq seq{seed, std::uint64_t{0x70726f626d6564}};
  std::array<std::uint64_t, kNumModalities> seeds{};
  std::vector<std::uint32_t> words(2 * kNumModalities);
  seq.generate(words.begin(), words.end());
  for (std::size_t i = 0; i < kNumModalities; ++i) {
    seeds[i] = (std::uint64_t{words[2 * i]} << 32) | words[2 * i + 1];
    m.encoders[i] = init_encoder(
        seeds[i], EncoderDims{config.input_dims[i], config.hidden, config.embed}, config.batch_norm);
  }
  return m;
}

}  // namespace probmed
