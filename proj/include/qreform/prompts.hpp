#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// A prompt template with a `{query}` placeholder; the clustering and
/// scoring templates additionally carry a `{queries}` placeholder that
/// receives the generated-query list as a JSON array.
struct PromptTemplate {
  PromptKind kind;
  std::string template_text;
};

inline const std::string& prompt_template_text(PromptKind kind) {
  static const std::string contextual =
      "You are a contextual expansion expert. Your task is to understand the "
      "core intent of the original query and provide a refined, contextually "
      "expanded answer. Provide a clear and concise response based on the "
      "original query.\n"
      "Below is the query: {query}";
  static const std::string detail =
      "You are a detail-specific expert. Your task is to understand the core "
      "intent of the original query and provide a refined, detailed answer "
      "focusing on particular details or subtopics directly related to the "
      "query. Provide a clear and concise response based on the original "
      "query.\n"
      "Below is the query: {query}";
  static const std::string aspect =
      "You are an aspect-specific inquiry expert. Your task is to understand "
      "the core intent of the original query and provide a refined answer "
      "focusing on a specific aspect or dimension within the topic. Provide a "
      "clear and concise response based on the original query.\n"
      "Below is the query: {query}";
  static const std::string clarity =
      "You are a clarity-enhancement expert. Your task is to understand the "
      "core intent of the original query and reformulate it to enhance "
      "clarity and specificity. Focus on eliminating ambiguity and ensuring "
      "the query is straightforward, which aids in retrieving the most "
      "relevant contexts. Provide a clear and concise response based on the "
      "original query.\n"
      "Below is the query: {query}";
  static const std::string clustering =
      "You are an expert in clustering and query refinement. Your task is to "
      "review the original query alongside the generated queries, and then "
      "cluster them into 1 to 3 groups based on their similarity and "
      "relevance.\n"
      "The number of clusters should be determined dynamically. Focus "
      "primarily on the relationship of the generated queries to the "
      "original query. For each identified cluster, provide only one refined "
      "query that incorporates elements from the original and generated "
      "queries within that cluster with useful information for document "
      "retrieval.\n"
      "The output should be presented in JSON format, structured as "
      "follows:\n"
      "{'cluster1': 'refined_query_1', 'cluster2': 'refined_query_2', "
      "'cluster3': 'refined_query_3'}\n"
      "The output must be restricted to 1 to 3 groups.\n"
      "Below is the query: {query}\n"
      "Generated queries: {queries}";
  static const std::string scoring =
      "You are an expert in scoring cluster queries. Evaluate the clustering "
      "of queries using the following criteria for each cluster: Relevance, "
      "Specificity, Clarity, Comprehensiveness, and Usefulness for "
      "retrieval.\n"
      "Assign a score from 1 to 100, where 1 is the lowest and 100 is the "
      "highest performance in relation to the original query. Avoid "
      "defaulting to high scores unless they are clearly justified. "
      "Carefully consider both the strengths and weaknesses of each "
      "cluster.\n"
      "For instance, a cluster with relevant but not highly specific results "
      "might score between 40 and 60, while a cluster that is both highly "
      "relevant and specific might score between 70 and 100. Conversely, a "
      "cluster lacking clarity or comprehensiveness should score lower, "
      "between 10 and 30.\n"
      "Provide scores that accurately reflect the variation in quality "
      "across clusters. List your scores for each cluster in the following "
      "format: [score_cluster1, score_cluster2, score_cluster3].\n"
      "Return your scores in a list format only, without additional "
      "commentary.\n"
      "Initial Query: {query}\n"
      "Cluster-Generated Queries : {queries}";
  switch (kind) {
    case PromptKind::ContextualExpansion: return contextual;
    case PromptKind::DetailSpecific: return detail;
    case PromptKind::AspectSpecific: return aspect;
    case PromptKind::ClarityEnhancement: return clarity;
    case PromptKind::ClusteringGeneration: return clustering;
    case PromptKind::Scoring: return scoring;
  }
  throw ConfigError("unhandled prompt kind");
}

inline bool prompt_takes_query_list(PromptKind kind) {
  return kind == PromptKind::ClusteringGeneration || kind == PromptKind::Scoring;
}

namespace detail {

inline bool replace_first(std::string& text, const std::string& marker,
                          const std::string& value) {
  auto pos = text.find(marker);
  if (pos == std::string::npos) return false;
  text.replace(pos, marker.size(), value);
  return true;
}

}  // namespace detail

/// Fills the template for `kind` with the query text and, for clustering and
/// scoring prompts, the generated-query list. Deterministic; the result
/// carries no residual placeholder markers.
inline std::string render_prompt(
    PromptKind kind, const Query& q,
    const std::optional<std::vector<std::string>>& extra = std::nullopt) {
  if (prompt_takes_query_list(kind)) {
    if (!extra.has_value() || extra->empty())
      throw ConfigError(std::string("prompt kind '") + to_string(kind) +
                        "' requires a non-empty generated-query list");
  } else if (extra.has_value()) {
    throw ConfigError(std::string("prompt kind '") + to_string(kind) +
                      "' takes no generated-query list");
  }

  std::string text = prompt_template_text(kind);
  if (!detail::replace_first(text, "{query}", q.text))
    throw Error("template for kind lacks {query} placeholder");
  if (prompt_takes_query_list(kind)) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : *extra) arr.push_back(s);
    if (!detail::replace_first(text, "{queries}", arr.dump()))
      throw Error("template for kind lacks {queries} placeholder");
  }
  if (text.find("{query}") != std::string::npos ||
      text.find("{queries}") != std::string::npos)
    throw Error("rendered prompt retains a placeholder marker");
  return text;
}

}  // namespace qreform
