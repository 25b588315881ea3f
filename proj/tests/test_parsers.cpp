#include <catch2/catch_amalgamated.hpp>

#include <cstdint>
#include <string>

#include "qreform/parsers.hpp"

using namespace qreform;
using Catch::Matchers::ContainsSubstring;

TEST_CASE("cluster parser reads a clean JSON object") {
  auto cs = parse_cluster_output(
      R"({"cluster1": "solar panel efficiency", "cluster2": "solar cost"})");
  REQUIRE(cs.size() == 2);
  CHECK(cs.clusters()[0] == "solar panel efficiency");
  CHECK(cs.clusters()[1] == "solar cost");
  CHECK(cs.source_iteration() == 0);
}

TEST_CASE("cluster parser tolerates prose around the object") {
  auto cs = parse_cluster_output(
      "Sure! Here are the clusters you asked for:\n"
      R"({"cluster1": "alpha"})"
      "\nHope that helps.");
  REQUIRE(cs.size() == 1);
  CHECK(cs.clusters()[0] == "alpha");
}

TEST_CASE("cluster parser accepts the single-quoted example shape") {
  auto cs = parse_cluster_output(
      "{'cluster1': 'solar power', 'cluster2': 'wind power'}");
  REQUIRE(cs.size() == 2);
  CHECK(cs.clusters()[0] == "solar power");
  CHECK(cs.clusters()[1] == "wind power");
}

TEST_CASE("apostrophes survive in double-quoted values") {
  auto cs = parse_cluster_output(R"({"cluster1": "the sun's output"})");
  REQUIRE(cs.size() == 1);
  CHECK(cs.clusters()[0] == "the sun's output");
}

TEST_CASE("braces inside values do not break region extraction") {
  auto cs = parse_cluster_output(R"({"cluster1": "use {braces} wisely"})");
  REQUIRE(cs.size() == 1);
  CHECK(cs.clusters()[0] == "use {braces} wisely");
}

TEST_CASE("an unparsable first region is skipped for a later valid one") {
  auto cs = parse_cluster_output(
      "{oops not json} then {\"cluster1\": \"real\"}");
  REQUIRE(cs.size() == 1);
  CHECK(cs.clusters()[0] == "real");
}

TEST_CASE("cluster parser stamps the source iteration") {
  auto cs = parse_cluster_output(R"({"cluster1": "a"})", 2);
  CHECK(cs.source_iteration() == 2);
}

TEST_CASE("cluster parser preserves document order") {
  auto cs = parse_cluster_output(
      R"({"cluster2": "second", "cluster1": "first"})");
  REQUIRE(cs.size() == 2);
  CHECK(cs.clusters()[0] == "second");
  CHECK(cs.clusters()[1] == "first");
}

TEST_CASE("cluster parser rejections") {
  CHECK_THROWS_MATCHES(parse_cluster_output("no braces at all"), ParseError,
                       Catch::Matchers::MessageMatches(
                           ContainsSubstring("no JSON object")));
  CHECK_THROWS_MATCHES(
      parse_cluster_output(R"({"cluster1": "a", "cluster4": "b"})"),
      ParseError,
      Catch::Matchers::MessageMatches(ContainsSubstring("cluster4")));
  CHECK_THROWS_MATCHES(parse_cluster_output("{}"), ParseError,
                       Catch::Matchers::MessageMatches(
                           ContainsSubstring("no clusters")));
  CHECK_THROWS_AS(parse_cluster_output(R"({"cluster1": 42})"), ParseError);
  CHECK_THROWS_AS(parse_cluster_output(R"({"cluster1": "  "})"), ParseError);
  CHECK_THROWS_AS(parse_cluster_output(R"({"summary": "x"})"), ParseError);
  CHECK_THROWS_AS(parse_cluster_output(R"([1, 2, 3])"), ParseError);
  CHECK_THROWS_AS(parse_cluster_output("{\"cluster1\": \"unterminated"),
                  ParseError);
}

TEST_CASE("score parser reads plain and prose-wrapped lists") {
  auto s = parse_score_output("[80, 90]", 2);
  REQUIRE(s.scores.size() == 2);
  CHECK(s.scores[0] == 80.0);
  CHECK(s.scores[1] == 90.0);

  auto wrapped = parse_score_output("My scores are: [55, 60.5, 70].", 3);
  REQUIRE(wrapped.scores.size() == 3);
  CHECK(wrapped.scores[1] == 60.5);
}

TEST_CASE("score parser accepts fully-numeric strings") {
  auto s = parse_score_output(R"(["80", "90.5"])", 2);
  CHECK(s.scores[0] == 80.0);
  CHECK(s.scores[1] == 90.5);
}

TEST_CASE("score parser boundary values") {
  auto s = parse_score_output("[1, 100]", 2);
  CHECK(s.scores[0] == 1.0);
  CHECK(s.scores[1] == 100.0);
}

TEST_CASE("score parser rejections") {
  CHECK_THROWS_MATCHES(parse_score_output("[80, 90]", 3), ParseError,
                       Catch::Matchers::MessageMatches(
                           ContainsSubstring("expected 3 scores, got 2")));
  CHECK_THROWS_AS(parse_score_output("[0.5, 80]", 2), ParseError);
  CHECK_THROWS_AS(parse_score_output("[80, 101]", 2), ParseError);
  CHECK_THROWS_AS(parse_score_output("[80, \"high\"]", 2), ParseError);
  CHECK_THROWS_AS(parse_score_output("no list here", 1), ParseError);
  CHECK_THROWS_AS(parse_score_output("[80", 1), ParseError);
  CHECK_THROWS_AS(parse_score_output("scores 80 and 90", 2), ParseError);
  CHECK_THROWS_AS(parse_score_output("[]", 1), ParseError);
  CHECK_THROWS_AS(parse_score_output("[80]", 0), ConfigError);
}

TEST_CASE("deeply nested input hits the depth cap instead of recursing") {
  std::string deep(5000, '[');
  deep += std::string(5000, ']');
  CHECK_THROWS_AS(parse_score_output(deep, 1), ParseError);
  std::string deep_obj(5000, '{');
  deep_obj += std::string(5000, '}');
  CHECK_THROWS_AS(parse_cluster_output(deep_obj), ParseError);
}

TEST_CASE("random byte fuzzing never crashes the parsers") {
  uint64_t state = 0x853c49e6748fea9bULL;
  auto next = [&]() {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return static_cast<uint32_t>(state >> 33);
  };
  const char charset[] =
      "{}[]\"'\\,:0123456789abcdefghij cluster tnrfu.-+eE\n\t";
  int parsed_ok = 0;
  for (int i = 0; i < 10000; ++i) {
    std::string s;
    std::size_t len = next() % 200;
    for (std::size_t j = 0; j < len; ++j) {
      if (next() % 16 == 0) {
        s.push_back(static_cast<char>(next() % 256));
      } else {
        s.push_back(charset[next() % (sizeof(charset) - 1)]);
      }
    }
    try {
      auto cs = parse_cluster_output(s);
      parsed_ok += static_cast<int>(cs.size());
    } catch (const ParseError&) {
    }
    try {
      auto sl = parse_score_output(s, 1 + static_cast<int>(next() % 3));
      parsed_ok += static_cast<int>(sl.scores.size());
    } catch (const ParseError&) {
    }
  }
  // Any other exception type or a crash fails the test; the count only keeps
  // the loop observable.
  CHECK(parsed_ok >= 0);
}
