#include <catch2/catch_amalgamated.hpp>

#include "qreform/prompts.hpp"

using namespace qreform;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::EndsWith;
using Catch::Matchers::StartsWith;

TEST_CASE("every template carries the placeholders its kind needs") {
  for (PromptKind k :
       {PromptKind::ContextualExpansion, PromptKind::DetailSpecific,
        PromptKind::AspectSpecific, PromptKind::ClarityEnhancement,
        PromptKind::ClusteringGeneration, PromptKind::Scoring}) {
    const std::string& t = prompt_template_text(k);
    CHECK(t.find("{query}") != std::string::npos);
    bool has_list = t.find("{queries}") != std::string::npos;
    CHECK(has_list == prompt_takes_query_list(k));
  }
}

TEST_CASE("generation templates end with the query line") {
  for (PromptKind k : all_generation_kinds()) {
    CHECK_THAT(prompt_template_text(k),
               EndsWith("Below is the query: {query}"));
  }
}

TEST_CASE("template opening sentences are distinct and stable") {
  // The offline provider recognizes templates by these openings, so they are
  // part of the interface.
  CHECK_THAT(prompt_template_text(PromptKind::ContextualExpansion),
             StartsWith("You are a contextual expansion expert"));
  CHECK_THAT(prompt_template_text(PromptKind::DetailSpecific),
             StartsWith("You are a detail-specific expert"));
  CHECK_THAT(prompt_template_text(PromptKind::AspectSpecific),
             StartsWith("You are an aspect-specific inquiry expert"));
  CHECK_THAT(prompt_template_text(PromptKind::ClarityEnhancement),
             StartsWith("You are a clarity-enhancement expert"));
  CHECK_THAT(prompt_template_text(PromptKind::ClusteringGeneration),
             StartsWith("You are an expert in clustering and query refinement"));
  CHECK_THAT(prompt_template_text(PromptKind::Scoring),
             StartsWith("You are an expert in scoring cluster queries"));
}

TEST_CASE("clustering template shows the single-quoted example shape") {
  const std::string& t = prompt_template_text(PromptKind::ClusteringGeneration);
  CHECK_THAT(t, ContainsSubstring("{'cluster1': 'refined_query_1'"));
  CHECK_THAT(t, ContainsSubstring("restricted to 1 to 3 groups"));
  CHECK_THAT(t, EndsWith("Below is the query: {query}\n"
                         "Generated queries: {queries}"));
}

TEST_CASE("scoring template asks for a bare list") {
  const std::string& t = prompt_template_text(PromptKind::Scoring);
  CHECK_THAT(t, ContainsSubstring("[score_cluster1, score_cluster2, "
                                  "score_cluster3]"));
  CHECK_THAT(t, EndsWith("Initial Query: {query}\n"
                         "Cluster-Generated Queries : {queries}"));
}

TEST_CASE("render_prompt fills the query placeholder") {
  Query q = make_query("q1", "solar power efficiency");
  std::string p = render_prompt(PromptKind::DetailSpecific, q);
  CHECK_THAT(p, EndsWith("Below is the query: solar power efficiency"));
  CHECK(p.find("{query}") == std::string::npos);
  // Deterministic.
  CHECK(p == render_prompt(PromptKind::DetailSpecific, q));
}

TEST_CASE("render_prompt serializes the query list as a JSON array") {
  Query q = make_query("q1", "solar power");
  std::vector<std::string> gen = {"solar panels", "pv \"cell\" output"};
  std::string p = render_prompt(PromptKind::ClusteringGeneration, q, gen);
  nlohmann::json arr = nlohmann::json(gen);
  CHECK_THAT(p, ContainsSubstring("Generated queries: " + arr.dump()));
  CHECK(p.find("{queries}") == std::string::npos);

  std::string s = render_prompt(PromptKind::Scoring, q, gen);
  CHECK_THAT(s, ContainsSubstring("Cluster-Generated Queries : " + arr.dump()));
}

TEST_CASE("render_prompt validates the extra-list contract") {
  Query q = make_query("q1", "solar power");
  std::vector<std::string> gen = {"a"};
  CHECK_THROWS_AS(render_prompt(PromptKind::ClusteringGeneration, q),
                  ConfigError);
  CHECK_THROWS_AS(render_prompt(PromptKind::Scoring, q,
                                std::vector<std::string>{}),
                  ConfigError);
  CHECK_THROWS_AS(render_prompt(PromptKind::ContextualExpansion, q, gen),
                  ConfigError);
}

TEST_CASE("query text containing placeholder-like braces stays literal") {
  // Replacement is single-pass, so braces inside the user query must not be
  // treated as markers.
  Query q = make_query("q1", "find {query} usage");
  // The rendered text still contains "{query}" from the user text itself; the
  // renderer cannot distinguish it, so it must reject rather than loop.
  CHECK_THROWS_AS(render_prompt(PromptKind::DetailSpecific, q), Error);
}

TEST_CASE("make_query validation") {
  CHECK_THROWS_AS(make_query("", "text"), ConfigError);
  CHECK_THROWS_AS(make_query("q1", "   "), ConfigError);
  Query q = make_query("q1", "ok");
  CHECK(q.id == "q1");
  CHECK(q.text == "ok");
}
