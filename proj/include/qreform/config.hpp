#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/types.hpp"

namespace qreform {

enum class ScoreFn { Cosine, Dot };
enum class NdcgGain { Linear, Exponential };

inline const char* to_string(ScoreFn f) {
  return f == ScoreFn::Cosine ? "cosine" : "dot";
}
inline const char* to_string(NdcgGain g) {
  return g == NdcgGain::Linear ? "linear" : "exponential";
}

/// Run-wide hyperparameters. Defaults are the reference operating point:
/// w0=0.7, sim threshold 0.2, score threshold 60, 2 samples per prompt,
/// 2 feedback iterations, sampling temperature 0.8 / top_p 0.95.
struct PipelineConfig {
  double w0 = 0.7;
  double sim_threshold = 0.2;
  double score_threshold = 60.0;
  int n_per_prompt = 2;
  int max_iterations = 2;
  // Label threshold for the reward-model dataset. No canonical value exists;
  // 0.3 sits below typical baseline averages so label 1 is the common case.
  double ndcg_label_threshold = 0.3;
  std::vector<PromptKind> prompt_kinds = {PromptKind::ContextualExpansion,
                                          PromptKind::DetailSpecific,
                                          PromptKind::AspectSpecific};
  AggregationStrategy aggregation_strategy = AggregationStrategy::SimDW;
  SamplingParams sampling;
  int top_k = 100;
  int parallelism = 1;
  ScoreFn score_fn = ScoreFn::Cosine;
  NdcgGain ndcg_gain = NdcgGain::Linear;
};

namespace detail {

inline void fail_range(const std::string& field, const std::string& value,
                       const std::string& interval) {
  throw ConfigError("config field '" + field + "' = " + value +
                    " outside legal interval " + interval);
}

inline void check_range(const std::string& field, double v, double lo,
                        double hi) {
  if (!(v >= lo && v <= hi)) {
    std::ostringstream iv;
    iv << "[" << lo << ", " << hi << "]";
    fail_range(field, std::to_string(v), iv.str());
  }
}

inline void check_min(const std::string& field, int v, int lo) {
  if (v < lo)
    fail_range(field, std::to_string(v), "[" + std::to_string(lo) + ", inf)");
}

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::set<std::string>& known,
                                const std::string& scope) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!known.count(key))
      throw ConfigError("unknown config key '" +
                        (scope.empty() ? key : scope + "." + key) + "'");
  }
}

}  // namespace detail

/// Range-checks every field. Returns the config unchanged when valid, so
/// validating twice is a no-op.
inline PipelineConfig validate_config(PipelineConfig cfg) {
  detail::check_range("w0", cfg.w0, 0.0, 1.0);
  detail::check_range("sim_threshold", cfg.sim_threshold, -1.0, 1.0);
  detail::check_range("score_threshold", cfg.score_threshold, 1.0, 100.0);
  detail::check_min("n_per_prompt", cfg.n_per_prompt, 1);
  detail::check_min("max_iterations", cfg.max_iterations, 0);
  detail::check_range("ndcg_label_threshold", cfg.ndcg_label_threshold, 0.0,
                      1.0);
  detail::check_min("top_k", cfg.top_k, 1);
  detail::check_min("parallelism", cfg.parallelism, 1);
  if (cfg.prompt_kinds.empty())
    throw ConfigError("config field 'prompt_kinds' must not be empty");
  std::set<PromptKind> seen;
  for (PromptKind k : cfg.prompt_kinds) {
    if (!is_generation_kind(k))
      throw ConfigError(std::string("prompt_kinds entry '") + to_string(k) +
                        "' is not a generation prompt");
    if (!seen.insert(k).second)
      throw ConfigError(std::string("duplicate prompt_kinds entry '") +
                        to_string(k) + "'");
  }
  if (!(cfg.sampling.temperature >= 0.0 && cfg.sampling.temperature <= 2.0))
    detail::fail_range("sampling.temperature",
                       std::to_string(cfg.sampling.temperature), "[0, 2]");
  if (!(cfg.sampling.top_p > 0.0 && cfg.sampling.top_p <= 1.0))
    detail::fail_range("sampling.top_p", std::to_string(cfg.sampling.top_p),
                       "(0, 1]");
  return cfg;
}

/// Parses a config document. Absent fields fall back to defaults; unknown
/// keys are an error rather than a warning.
inline PipelineConfig parse_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be an object");
  static const std::set<std::string> known = {
      "w0",           "sim_threshold",   "score_threshold",
      "n_per_prompt", "max_iterations",  "ndcg_label_threshold",
      "prompt_kinds", "aggregation_strategy", "sampling",
      "top_k",        "parallelism",     "score_fn",
      "ndcg_gain"};
  detail::reject_unknown_keys(doc, known, "");

  PipelineConfig cfg;
  auto num = [&](const char* key, double& out) {
    if (doc.contains(key)) {
      if (!doc[key].is_number())
        throw ConfigError(std::string("config field '") + key +
                          "' must be a number");
      out = doc[key].get<double>();
    }
  };
  auto integer = [&](const char* key, int& out) {
    if (doc.contains(key)) {
      if (!doc[key].is_number_integer())
        throw ConfigError(std::string("config field '") + key +
                          "' must be an integer");
      out = doc[key].get<int>();
    }
  };
  num("w0", cfg.w0);
  num("sim_threshold", cfg.sim_threshold);
  num("score_threshold", cfg.score_threshold);
  integer("n_per_prompt", cfg.n_per_prompt);
  integer("max_iterations", cfg.max_iterations);
  num("ndcg_label_threshold", cfg.ndcg_label_threshold);
  integer("top_k", cfg.top_k);
  integer("parallelism", cfg.parallelism);

  if (doc.contains("prompt_kinds")) {
    if (!doc["prompt_kinds"].is_array())
      throw ConfigError("config field 'prompt_kinds' must be an array");
    cfg.prompt_kinds.clear();
    for (const auto& k : doc["prompt_kinds"]) {
      if (!k.is_string())
        throw ConfigError("prompt_kinds entries must be strings");
      cfg.prompt_kinds.push_back(
          prompt_kind_from_string(k.get<std::string>()));
    }
  }
  if (doc.contains("aggregation_strategy")) {
    if (!doc["aggregation_strategy"].is_string())
      throw ConfigError("config field 'aggregation_strategy' must be a string");
    cfg.aggregation_strategy =
        strategy_from_string(doc["aggregation_strategy"].get<std::string>());
  }
  if (doc.contains("sampling")) {
    const auto& s = doc["sampling"];
    if (!s.is_object())
      throw ConfigError("config field 'sampling' must be an object");
    detail::reject_unknown_keys(s, {"temperature", "top_p"}, "sampling");
    if (s.contains("temperature"))
      cfg.sampling.temperature = s["temperature"].get<double>();
    if (s.contains("top_p")) cfg.sampling.top_p = s["top_p"].get<double>();
  }
  if (doc.contains("score_fn")) {
    std::string v = doc["score_fn"].get<std::string>();
    if (v == "cosine") cfg.score_fn = ScoreFn::Cosine;
    else if (v == "dot") cfg.score_fn = ScoreFn::Dot;
    else throw ConfigError("config field 'score_fn' must be cosine or dot");
  }
  if (doc.contains("ndcg_gain")) {
    std::string v = doc["ndcg_gain"].get<std::string>();
    if (v == "linear") cfg.ndcg_gain = NdcgGain::Linear;
    else if (v == "exponential") cfg.ndcg_gain = NdcgGain::Exponential;
    else
      throw ConfigError(
          "config field 'ndcg_gain' must be linear or exponential");
  }
  return validate_config(cfg);
}

inline PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file " + path + " is not valid JSON: " +
                      e.what());
  }
  return parse_config(doc);
}

inline nlohmann::json config_to_json(const PipelineConfig& cfg) {
  nlohmann::json out;
  out["w0"] = cfg.w0;
  out["sim_threshold"] = cfg.sim_threshold;
  out["score_threshold"] = cfg.score_threshold;
  out["n_per_prompt"] = cfg.n_per_prompt;
  out["max_iterations"] = cfg.max_iterations;
  out["ndcg_label_threshold"] = cfg.ndcg_label_threshold;
  nlohmann::json kinds = nlohmann::json::array();
  for (PromptKind k : cfg.prompt_kinds) kinds.push_back(to_string(k));
  out["prompt_kinds"] = kinds;
  out["aggregation_strategy"] = to_string(cfg.aggregation_strategy);
  out["sampling"] = {{"temperature", cfg.sampling.temperature},
                     {"top_p", cfg.sampling.top_p}};
  out["top_k"] = cfg.top_k;
  out["parallelism"] = cfg.parallelism;
  out["score_fn"] = to_string(cfg.score_fn);
  out["ndcg_gain"] = to_string(cfg.ndcg_gain);
  return out;
}

}  // namespace qreform
