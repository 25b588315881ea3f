#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qreform/errors.hpp"

namespace qreform {

inline std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

// ---------------------------------------------------------------------------
// Prompt kinds

enum class PromptKind {
  ContextualExpansion,
  DetailSpecific,
  AspectSpecific,
  ClarityEnhancement,
  ClusteringGeneration,
  Scoring,
};

inline const char* to_string(PromptKind k) {
  switch (k) {
    case PromptKind::ContextualExpansion: return "contextual_expansion";
    case PromptKind::DetailSpecific: return "detail_specific";
    case PromptKind::AspectSpecific: return "aspect_specific";
    case PromptKind::ClarityEnhancement: return "clarity_enhancement";
    case PromptKind::ClusteringGeneration: return "clustering_generation";
    case PromptKind::Scoring: return "scoring";
  }
  return "unknown";
}

inline PromptKind prompt_kind_from_string(std::string_view s) {
  if (s == "contextual_expansion") return PromptKind::ContextualExpansion;
  if (s == "detail_specific") return PromptKind::DetailSpecific;
  if (s == "aspect_specific") return PromptKind::AspectSpecific;
  if (s == "clarity_enhancement") return PromptKind::ClarityEnhancement;
  if (s == "clustering_generation") return PromptKind::ClusteringGeneration;
  if (s == "scoring") return PromptKind::Scoring;
  throw ConfigError("unknown prompt kind: '" + std::string(s) + "'");
}

// Kinds that produce reformulations (as opposed to clustering/scoring steps).
inline bool is_generation_kind(PromptKind k) {
  return k == PromptKind::ContextualExpansion || k == PromptKind::DetailSpecific ||
         k == PromptKind::AspectSpecific || k == PromptKind::ClarityEnhancement;
}

inline const std::vector<PromptKind>& all_generation_kinds() {
  static const std::vector<PromptKind> kinds = {
      PromptKind::ContextualExpansion,
      PromptKind::DetailSpecific,
      PromptKind::AspectSpecific,
      PromptKind::ClarityEnhancement,
  };
  return kinds;
}

// ---------------------------------------------------------------------------
// Aggregation strategies

enum class AggregationStrategy { DC, FW, SimDW, ScoreDW };

inline const char* to_string(AggregationStrategy s) {
  switch (s) {
    case AggregationStrategy::DC: return "dc";
    case AggregationStrategy::FW: return "fw";
    case AggregationStrategy::SimDW: return "simdw";
    case AggregationStrategy::ScoreDW: return "scoredw";
  }
  return "unknown";
}

inline AggregationStrategy strategy_from_string(std::string_view s) {
  if (s == "dc") return AggregationStrategy::DC;
  if (s == "fw") return AggregationStrategy::FW;
  if (s == "simdw") return AggregationStrategy::SimDW;
  if (s == "scoredw") return AggregationStrategy::ScoreDW;
  throw ConfigError("unknown aggregation strategy: '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Core value types

struct SamplingParams {
  double temperature = 0.8;
  double top_p = 0.95;
};

/// A user query entering the pipeline. `id` must be unique within a run,
/// `text` non-empty after trimming.
struct Query {
  std::string id;
  std::string text;
};

inline Query make_query(std::string id, std::string text) {
  if (id.empty()) throw ConfigError("query id must be non-empty");
  if (trim(text).empty())
    throw ConfigError("query '" + id + "' has empty text");
  return Query{std::move(id), std::move(text)};
}

/// One generated reformulation, tagged with the prompt that produced it,
/// which of the n samples it was, and the feedback-loop timestep.
struct ReformulatedQuery {
  std::string text;
  PromptKind prompt_kind = PromptKind::ContextualExpansion;
  int generation_index = 0;
  int iteration = 0;
};

/// 1-3 representative intent queries produced by the clustering step.
class ClusterSet {
 public:
  ClusterSet(std::vector<std::string> clusters, int source_iteration)
      : clusters_(std::move(clusters)), source_iteration_(source_iteration) {
    if (clusters_.empty() || clusters_.size() > 3)
      throw ParseError("cluster set must hold 1 to 3 clusters, got " +
                       std::to_string(clusters_.size()));
    for (const auto& c : clusters_) {
      if (trim(c).empty()) throw ParseError("empty cluster string");
    }
    if (source_iteration_ < 0)
      throw ConfigError("cluster source_iteration must be >= 0");
  }

  const std::vector<std::string>& clusters() const { return clusters_; }
  std::size_t size() const { return clusters_.size(); }
  int source_iteration() const { return source_iteration_; }

  /// {"cluster1": ..., "cluster2": ...} with keys in cluster order.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json out;
    for (std::size_t i = 0; i < clusters_.size(); ++i) {
      out["cluster" + std::to_string(i + 1)] = clusters_[i];
    }
    return out;
  }

  bool operator==(const ClusterSet& other) const {
    return clusters_ == other.clusters_;
  }

 private:
  std::vector<std::string> clusters_;
  int source_iteration_ = 0;
};

/// Per-cluster quality scores, each on the raw 1-100 scale.
struct ScoreList {
  std::vector<double> scores;
};

inline ScoreList make_score_list(std::vector<double> scores) {
  for (double s : scores) {
    if (!(s >= 1.0 && s <= 100.0))
      throw ParseError("score " + std::to_string(s) +
                       " outside legal range [1, 100]");
  }
  return ScoreList{std::move(scores)};
}

}  // namespace qreform
