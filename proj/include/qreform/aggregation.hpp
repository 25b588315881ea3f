#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qreform/config.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// One candidate query's fate during aggregation. `signal` is the raw value
/// the threshold saw (cosine for similarity weighting, 1-100 score for score
/// weighting); `weight` is the contribution coefficient, 0 when excluded.
struct BundleEntry {
  std::string text;
  double weight = 0.0;
  bool included = false;
  std::string reason = "passed";  // "passed" | "below_threshold"
  std::optional<double> signal;
};

struct WeightedQueryBundle {
  AggregationStrategy strategy = AggregationStrategy::SimDW;
  double w0 = 0.0;
  std::string init_text;
  std::vector<BundleEntry> entries;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["strategy"] = to_string(strategy);
    doc["w0"] = w0;
    doc["init"] = init_text;
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : entries) {
      nlohmann::ordered_json row;
      row["text"] = e.text;
      row["weight"] = e.weight;
      row["included"] = e.included;
      row["reason"] = e.reason;
      if (e.signal.has_value()) row["signal"] = *e.signal;
      arr.push_back(std::move(row));
    }
    doc["entries"] = std::move(arr);
    return doc;
  }
};

/// Aggregation result: an embedding for the weighting strategies, a
/// concatenated text for direct concatenation.
struct AggregatedQuery {
  AggregationStrategy strategy = AggregationStrategy::SimDW;
  std::optional<Embedding> embedding;
  std::optional<std::string> text;
  WeightedQueryBundle bundle;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["strategy"] = to_string(strategy);
    if (embedding.has_value()) doc["embedding"] = *embedding;
    if (text.has_value()) doc["text"] = *text;
    doc["bundle"] = bundle.to_json();
    return doc;
  }
};

struct AggregationInputs {
  std::string init_text;
  Embedding init_embedding;  // unused by direct concatenation
  std::vector<std::string> ref_texts;
  std::vector<Embedding> ref_embeddings;  // unused by direct concatenation
  std::optional<ScoreList> scores;        // score weighting only
};

/// result = w0 * e_init + sum over refs with cos(e_init, e_i) >= threshold
/// of cos(e_init, e_i) * e_i. The boundary cosine passes.
inline AggregatedQuery aggregate_sim_weighted(const AggregationInputs& in,
                                              double w0,
                                              double sim_threshold) {
  if (in.ref_texts.size() != in.ref_embeddings.size())
    throw ConfigError("ref texts and embeddings disagree in count");
  Embedding acc(in.init_embedding.size());
  for (std::size_t d = 0; d < acc.size(); ++d)
    acc[d] = w0 * in.init_embedding[d];

  AggregatedQuery out;
  out.strategy = AggregationStrategy::SimDW;
  out.bundle = {AggregationStrategy::SimDW, w0, in.init_text, {}};
  for (std::size_t i = 0; i < in.ref_embeddings.size(); ++i) {
    double cos = cosine_similarity(in.init_embedding, in.ref_embeddings[i]);
    BundleEntry e;
    e.text = in.ref_texts[i];
    e.signal = cos;
    if (cos >= sim_threshold) {
      e.included = true;
      e.weight = cos;
      e.reason = "passed";
      for (std::size_t d = 0; d < acc.size(); ++d)
        acc[d] += cos * in.ref_embeddings[i][d];
    } else {
      e.included = false;
      e.weight = 0.0;
      e.reason = "below_threshold";
    }
    out.bundle.entries.push_back(std::move(e));
  }
  out.embedding = std::move(acc);
  return out;
}

/// result = w0 * e_init + sum over refs with raw score >= threshold of
/// (score / 100) * e_i. Scores arrive on the 1-100 judge scale.
inline AggregatedQuery aggregate_score_weighted(const AggregationInputs& in,
                                                double w0,
                                                double score_threshold) {
  if (in.ref_texts.size() != in.ref_embeddings.size())
    throw ConfigError("ref texts and embeddings disagree in count");
  if (!in.scores.has_value())
    throw ConfigError("score weighting needs a score list");
  if (in.scores->scores.size() != in.ref_texts.size())
    throw ConfigError("score count " +
                      std::to_string(in.scores->scores.size()) +
                      " does not match ref count " +
                      std::to_string(in.ref_texts.size()));
  Embedding acc(in.init_embedding.size());
  for (std::size_t d = 0; d < acc.size(); ++d)
    acc[d] = w0 * in.init_embedding[d];

  AggregatedQuery out;
  out.strategy = AggregationStrategy::ScoreDW;
  out.bundle = {AggregationStrategy::ScoreDW, w0, in.init_text, {}};
  for (std::size_t i = 0; i < in.ref_embeddings.size(); ++i) {
    require_same_dim(in.init_embedding, in.ref_embeddings[i],
                     "aggregate_score_weighted");
    double raw = in.scores->scores[i];
    BundleEntry e;
    e.text = in.ref_texts[i];
    e.signal = raw;
    if (raw >= score_threshold) {
      double w = raw / 100.0;
      e.included = true;
      e.weight = w;
      e.reason = "passed";
      for (std::size_t d = 0; d < acc.size(); ++d)
        acc[d] += w * in.ref_embeddings[i][d];
    } else {
      e.included = false;
      e.weight = 0.0;
      e.reason = "below_threshold";
    }
    out.bundle.entries.push_back(std::move(e));
  }
  out.embedding = std::move(acc);
  return out;
}

/// result = w0 * e_init + sum of (1 - w0) / |refs| * e_i. Every ref is
/// included with the same fixed weight.
inline AggregatedQuery aggregate_fixed_weighted(const AggregationInputs& in,
                                                double w0) {
  if (in.ref_texts.size() != in.ref_embeddings.size())
    throw ConfigError("ref texts and embeddings disagree in count");
  Embedding acc(in.init_embedding.size());
  for (std::size_t d = 0; d < acc.size(); ++d)
    acc[d] = w0 * in.init_embedding[d];

  AggregatedQuery out;
  out.strategy = AggregationStrategy::FW;
  out.bundle = {AggregationStrategy::FW, w0, in.init_text, {}};
  if (!in.ref_embeddings.empty()) {
    double w = (1.0 - w0) / static_cast<double>(in.ref_embeddings.size());
    for (std::size_t i = 0; i < in.ref_embeddings.size(); ++i) {
      require_same_dim(in.init_embedding, in.ref_embeddings[i],
                       "aggregate_fixed_weighted");
      BundleEntry e;
      e.text = in.ref_texts[i];
      e.weight = w;
      e.included = true;
      e.reason = "passed";
      for (std::size_t d = 0; d < acc.size(); ++d)
        acc[d] += w * in.ref_embeddings[i][d];
      out.bundle.entries.push_back(std::move(e));
    }
  }
  out.embedding = std::move(acc);
  return out;
}

/// "init [SEP] ref1 [SEP] ref2 [SEP] " minus the final space: refs joined
/// after the initial query with " [SEP] " and a trailing " [SEP]"; with no
/// refs the initial text passes through untouched.
inline std::string concat_with_separators(const std::string& init_text,
                                          const std::vector<std::string>& refs) {
  if (refs.empty()) return init_text;
  std::string out = init_text;
  for (const auto& r : refs) {
    out += " [SEP] ";
    out += r;
  }
  out += " [SEP]";
  return out;
}

/// Inverse of concat_with_separators for well-formed inputs: split on the
/// separator token, trim, drop empties.
inline std::vector<std::string> split_on_separators(const std::string& text) {
  std::vector<std::string> parts;
  std::size_t pos = 0;
  const std::string sep = "[SEP]";
  while (pos <= text.size()) {
    std::size_t next = text.find(sep, pos);
    std::string piece = next == std::string::npos
                            ? text.substr(pos)
                            : text.substr(pos, next - pos);
    std::string trimmed = trim(piece);
    if (!trimmed.empty()) parts.push_back(std::move(trimmed));
    if (next == std::string::npos) break;
    pos = next + sep.size();
  }
  return parts;
}

inline AggregatedQuery aggregate_direct_concat(const AggregationInputs& in) {
  AggregatedQuery out;
  out.strategy = AggregationStrategy::DC;
  out.bundle = {AggregationStrategy::DC, 1.0, in.init_text, {}};
  for (const auto& t : in.ref_texts) {
    BundleEntry e;
    e.text = t;
    e.weight = 0.0;
    e.included = true;
    e.reason = "passed";
    out.bundle.entries.push_back(std::move(e));
  }
  out.text = concat_with_separators(in.init_text, in.ref_texts);
  return out;
}

inline AggregatedQuery aggregate(const AggregationInputs& in,
                                 AggregationStrategy strategy, double w0,
                                 double sim_threshold, double score_threshold) {
  if (strategy != AggregationStrategy::DC) {
    if (in.init_embedding.empty())
      throw ConfigError("weighting strategies need the initial embedding");
    for (const auto& e : in.ref_embeddings)
      require_same_dim(in.init_embedding, e, "aggregate");
  }
  switch (strategy) {
    case AggregationStrategy::DC:
      return aggregate_direct_concat(in);
    case AggregationStrategy::FW:
      return aggregate_fixed_weighted(in, w0);
    case AggregationStrategy::SimDW:
      return aggregate_sim_weighted(in, w0, sim_threshold);
    case AggregationStrategy::ScoreDW:
      return aggregate_score_weighted(in, w0, score_threshold);
  }
  throw ConfigError("unknown aggregation strategy");
}

}  // namespace qreform
