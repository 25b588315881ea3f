#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qreform/errors.hpp"
#include "qreform/types.hpp"

namespace qreform {
namespace detail {

// Scans from `open` (which must index an opening bracket) to its balanced
// close, honoring single- and double-quoted strings with backslash escapes.
// Returns npos when unterminated or nested deeper than `max_depth`.
inline std::size_t balanced_extent(std::string_view s, std::size_t open,
                                   char open_ch, char close_ch,
                                   int max_depth = 128) {
  int depth = 0;
  char quote = 0;
  bool escaped = false;
  for (std::size_t i = open; i < s.size(); ++i) {
    char c = s[i];
    if (quote != 0) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == quote) {
        quote = 0;
      }
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == open_ch) {
      if (++depth > max_depth) return std::string::npos;
    } else if (c == close_ch) {
      if (--depth == 0) return i;
    }
  }
  return std::string::npos;
}

// Single-quoted pseudo-JSON gets its quotes rewritten; only applied when the
// candidate holds no double quotes at all, so apostrophes in proper JSON
// values survive.
inline std::optional<std::string> normalize_single_quotes(
    std::string_view candidate) {
  if (candidate.find('"') != std::string_view::npos) return std::nullopt;
  std::string out(candidate);
  for (char& c : out) {
    if (c == '\'') c = '"';
  }
  return out;
}

inline std::optional<nlohmann::ordered_json> try_parse_json(
    std::string_view candidate) {
  auto doc = nlohmann::ordered_json::parse(candidate, nullptr,
                                           /*allow_exceptions=*/false);
  if (!doc.is_discarded()) return doc;
  if (auto normalized = normalize_single_quotes(candidate)) {
    doc = nlohmann::ordered_json::parse(*normalized, nullptr, false);
    if (!doc.is_discarded()) return doc;
  }
  return std::nullopt;
}

// First balanced region starting at an `open_ch` that parses as JSON.
inline std::optional<nlohmann::ordered_json> first_parsed_region(
    std::string_view raw, char open_ch, char close_ch) {
  for (std::size_t pos = raw.find(open_ch); pos != std::string_view::npos;
       pos = raw.find(open_ch, pos + 1)) {
    std::size_t end = balanced_extent(raw, pos, open_ch, close_ch);
    if (end == std::string_view::npos) continue;
    if (auto doc = try_parse_json(raw.substr(pos, end - pos + 1))) return doc;
  }
  return std::nullopt;
}

inline double numeric_element(const nlohmann::ordered_json& v) {
  if (v.is_number()) return v.get<double>();
  if (v.is_string()) {
    const std::string& s = v.get<std::string>();
    std::size_t consumed = 0;
    try {
      double parsed = std::stod(s, &consumed);
      if (consumed == s.size()) return parsed;
    } catch (const std::exception&) {
    }
  }
  throw ParseError("score element is not numeric: " + v.dump());
}

}  // namespace detail

/// Extracts the first balanced JSON object from a completion (prose around it
/// is tolerated) and reads it under the cluster contract: keys limited to
/// cluster1..cluster3, 1 to 3 of them, non-empty string values, document
/// order preserved.
inline ClusterSet parse_cluster_output(std::string_view raw,
                                       int source_iteration = 0) {
  auto doc = detail::first_parsed_region(raw, '{', '}');
  if (!doc || !doc->is_object())
    throw ParseError("no JSON object found in cluster output");

  std::vector<std::string> clusters;
  for (const auto& [key, value] : doc->items()) {
    if (key != "cluster1" && key != "cluster2" && key != "cluster3")
      throw ParseError("unexpected key '" + key +
                       "' in cluster output (accepted: cluster1..cluster3)");
    if (!value.is_string())
      throw ParseError("cluster '" + key + "' value is not a string");
    std::string text = value.get<std::string>();
    if (trim(text).empty())
      throw ParseError("cluster '" + key + "' is an empty string");
    clusters.push_back(std::move(text));
  }
  if (clusters.empty())
    throw ParseError("cluster output holds no clusters");
  if (clusters.size() > 3)
    throw ParseError("cluster output holds " + std::to_string(clusters.size()) +
                     " clusters; the contract allows 1 to 3");
  return ClusterSet(std::move(clusters), source_iteration);
}

/// Extracts the first bracketed list from a completion and reads it as
/// exactly `expected_count` scores, each within [1, 100].
inline ScoreList parse_score_output(std::string_view raw, int expected_count) {
  if (expected_count <= 0)
    throw ConfigError("expected_count must be positive");
  auto doc = detail::first_parsed_region(raw, '[', ']');
  if (!doc || !doc->is_array())
    throw ParseError("no score list found in scoring output");

  std::vector<double> scores;
  scores.reserve(doc->size());
  for (const auto& v : *doc) scores.push_back(detail::numeric_element(v));
  if (static_cast<int>(scores.size()) != expected_count)
    throw ParseError("expected " + std::to_string(expected_count) +
                     " scores, got " + std::to_string(scores.size()));
  return make_score_list(std::move(scores));
}

}  // namespace qreform
