#include "probmed/cli/run_config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace probmed::cli {

using nlohmann::json;

namespace {

// Reads known keys of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config field '" + name_ + "." + key + "': " + e.what());
    }
  }
  template <class T, class Parse>
  void get_as(const char* key, T& out, Parse parse) {
    std::string text;
    bool present = j_.contains(key);
    get(key, text);
    if (!present) return;
    try {
      out = parse(text);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("config field '" + name_ + "." + key + "': " + e.what());
    }
  }
  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("unknown config field '" + name_ + "." + k + "'");
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

json pair_map_to_json(const std::map<ModalityPair, double>& m) {
  json out = json::object();
  for (const auto& [p, w] : m) out[to_string(p)] = w;
  return out;
}

std::map<ModalityPair, double> pair_map_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ConfigError("config field '" + where + "' must be an object");
  std::map<ModalityPair, double> out;
  for (const auto& [k, v] : j.items()) {
    try {
      out[parse_pair(k)] = v.get<double>();
    } catch (const std::exception& e) {
      throw ConfigError("config field '" + where + "." + k + "': " + e.what());
    }
  }
  return out;
}

json corpus_to_json(const CorpusConfig& c) {
  return {{"n_records", c.n_records},
          {"n_classes", c.n_classes},
          {"latent_dim", c.latent_dim},
          {"view_dims", c.view_dims},
          {"noise_scales", c.noise_scales},
          {"noise_spread", c.noise_spread},
          {"projection_seeds", c.projection_seeds},
          {"cluster_separation", c.cluster_separation},
          {"cluster_spread", c.cluster_spread},
          {"class_weights", c.class_weights},
          {"text_variants", c.text_variants},
          {"variant_offset_norm", c.variant_offset_norm},
          {"pair_availability", pair_map_to_json(c.pair_availability)},
          {"train_fraction", c.train_fraction},
          {"valid_fraction", c.valid_fraction},
          {"test_fraction", c.test_fraction},
          {"complementary_ab", c.complementary_ab}};
}

void corpus_from_json(const json& j, CorpusConfig& c) {
  Section s(j, "corpus");
  s.get("n_records", c.n_records);
  s.get("n_classes", c.n_classes);
  s.get("latent_dim", c.latent_dim);
  s.get("view_dims", c.view_dims);
  s.get("noise_scales", c.noise_scales);
  s.get("noise_spread", c.noise_spread);
  s.get("projection_seeds", c.projection_seeds);
  s.get("cluster_separation", c.cluster_separation);
  s.get("cluster_spread", c.cluster_spread);
  s.get("class_weights", c.class_weights);
  s.get("text_variants", c.text_variants);
  s.get("variant_offset_norm", c.variant_offset_norm);
  if (const json* p = s.child("pair_availability")) c.pair_availability = pair_map_from_json(*p, "corpus.pair_availability");
  s.get("train_fraction", c.train_fraction);
  s.get("valid_fraction", c.valid_fraction);
  s.get("test_fraction", c.test_fraction);
  s.get("complementary_ab", c.complementary_ab);
  s.finish();
}

json train_to_json(const TrainConfig& t) {
  return {{"alpha", t.weights.alpha},
          {"beta", t.weights.beta},
          {"gamma", t.weights.gamma},
          {"tau", t.weights.tau},
          {"similarity", std::string(to_string(t.similarity))},
          {"negate_similarity", t.negate_similarity},
          {"batch_size", t.batch_size},
          {"total_steps", t.total_steps},
          {"lr", t.lr},
          {"weight_decay", t.weight_decay},
          {"beta1", t.beta1},
          {"beta2", t.beta2},
          {"grad_clip", t.grad_clip},
          {"bn_enabled", t.bn_enabled},
          {"sis_enabled", t.sis_enabled},
          {"hidden", t.hidden},
          {"embed", t.embed},
          {"pair_weights", pair_map_to_json(t.pair_weights)},
          {"eval_every", t.eval_every},
          {"val_gallery", t.val_gallery},
          {"val_batches", t.val_batches}};
}

void train_from_json(const json& j, TrainConfig& t) {
  Section s(j, "train");
  s.get("alpha", t.weights.alpha);
  s.get("beta", t.weights.beta);
  s.get("gamma", t.weights.gamma);
  s.get("tau", t.weights.tau);
  s.get_as("similarity", t.similarity, parse_similarity);
  s.get("negate_similarity", t.negate_similarity);
  s.get("batch_size", t.batch_size);
  s.get("total_steps", t.total_steps);
  s.get("lr", t.lr);
  s.get("weight_decay", t.weight_decay);
  s.get("beta1", t.beta1);
  s.get("beta2", t.beta2);
  s.get("grad_clip", t.grad_clip);
  s.get("bn_enabled", t.bn_enabled);
  s.get("sis_enabled", t.sis_enabled);
  s.get("hidden", t.hidden);
  s.get("embed", t.embed);
  if (const json* p = s.child("pair_weights")) t.pair_weights = pair_map_from_json(*p, "train.pair_weights");
  s.get("eval_every", t.eval_every);
  s.get("val_gallery", t.val_gallery);
  s.get("val_batches", t.val_batches);
  s.finish();
}

json eval_to_json(const EvalSettings& e) {
  return {{"protocol", e.protocol},
          {"similarity", e.similarity ? json(std::string(to_string(*e.similarity))) : json(nullptr)},
          {"ks", e.ks},
          {"gallery_cap", e.gallery_cap},
          {"prompts_clean", e.prompts_clean},
          {"prompts_noisy", e.prompts_noisy},
          {"prompt_clean_noise", e.prompt_clean_noise},
          {"prompt_noisy_noise", e.prompt_noisy_noise},
          {"filter_prompts", e.filter_prompts},
          {"fewshot_mode", std::string(to_string(e.fewshot_mode))},
          {"fewshot_samples", e.fewshot_samples},
          {"shots", e.shots},
          {"fewshot_seeds", e.fewshot_seeds},
          {"multimodal_shots", e.multimodal_shots},
          {"fusion", std::string(to_string(e.fusion))},
          {"noise_modality", std::string(to_string(e.noise_modality))},
          {"noise_levels", e.noise_levels},
          {"noise_items", e.noise_items},
          {"permutations", e.permutations}};
}

void eval_from_json(const json& j, EvalSettings& e) {
  Section s(j, "eval");
  s.get("protocol", e.protocol);
  if (const json* sim = s.child("similarity")) {
    if (sim->is_null()) {
      e.similarity.reset();
    } else {
      try {
        e.similarity = parse_similarity(sim->get<std::string>());
      } catch (const std::exception& ex) {
        throw ConfigError(std::string("config field 'eval.similarity': ") + ex.what());
      }
    }
  }
  s.get("ks", e.ks);
  s.get("gallery_cap", e.gallery_cap);
  s.get("prompts_clean", e.prompts_clean);
  s.get("prompts_noisy", e.prompts_noisy);
  s.get("prompt_clean_noise", e.prompt_clean_noise);
  s.get("prompt_noisy_noise", e.prompt_noisy_noise);
  s.get("filter_prompts", e.filter_prompts);
  s.get_as("fewshot_mode", e.fewshot_mode, parse_fewshot_mode);
  s.get("fewshot_samples", e.fewshot_samples);
  s.get("shots", e.shots);
  s.get("fewshot_seeds", e.fewshot_seeds);
  s.get("multimodal_shots", e.multimodal_shots);
  s.get_as("fusion", e.fusion, parse_fusion);
  s.get_as("noise_modality", e.noise_modality, parse_modality);
  s.get("noise_levels", e.noise_levels);
  s.get("noise_items", e.noise_items);
  s.get("permutations", e.permutations);
  s.finish();
}

}  // namespace

void RunConfig::validate() const {
  try {
    corpus.validate();
    train.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  static const std::set<std::string> protocols = {"retrieval", "zeroshot", "fewshot", "multimodal", "noiseprobe"};
  if (!protocols.count(eval.protocol)) {
    throw ConfigError("unknown eval protocol '" + eval.protocol +
                      "' (expected retrieval|zeroshot|fewshot|multimodal|noiseprobe)");
  }
  if (eval.ks.empty()) throw ConfigError("eval.ks must not be empty");
  if (eval.prompts_clean + eval.prompts_noisy == 0) throw ConfigError("eval needs at least one prompt per class");
  if (eval.shots.empty()) throw ConfigError("eval.shots must not be empty");
  if (eval.fewshot_seeds == 0) throw ConfigError("eval.fewshot_seeds must be >= 1");
  if (eval.permutations == 0) throw ConfigError("eval.permutations must be >= 1");
}

std::string to_json(const RunConfig& cfg) {
  json j = {{"seed", cfg.seed},
            {"corpus", corpus_to_json(cfg.corpus)},
            {"train", train_to_json(cfg.train)},
            {"eval", eval_to_json(cfg.eval)},
            {"paths", {{"corpus", cfg.paths.corpus}, {"checkpoint", cfg.paths.checkpoint}, {"report_dir", cfg.paths.report_dir}}}};
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  Section top(j, "config");
  top.get("seed", cfg.seed);
  if (const json* c = top.child("corpus")) corpus_from_json(*c, cfg.corpus);
  if (const json* t = top.child("train")) train_from_json(*t, cfg.train);
  if (const json* e = top.child("eval")) eval_from_json(*e, cfg.eval);
  if (const json* p = top.child("paths")) {
    Section s(*p, "paths");
    s.get("corpus", cfg.paths.corpus);
    s.get("checkpoint", cfg.paths.checkpoint);
    s.get("report_dir", cfg.paths.report_dir);
    s.finish();
  }
  top.finish();
  cfg.train.seed = cfg.seed;
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return run_config_from_json(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace probmed::cli
