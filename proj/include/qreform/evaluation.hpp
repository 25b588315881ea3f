#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <json.hpp>

#include "qreform/cache.hpp"
#include "qreform/config.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/io.hpp"
#include "qreform/retrieval.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// qid -> docid -> relevance grade (non-negative integers).
using Qrels = std::map<std::string, std::map<std::string, int>>;

/// Accepts 3-column TSV (query-id, corpus-id, score, optional header) and
/// 4-column whitespace qrels (qid, iteration, docid, rel).
inline Qrels load_qrels(const std::filesystem::path& path) {
  Qrels qrels;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    std::vector<std::string> fields;
    std::string f;
    while (row >> f) fields.push_back(f);
    std::string qid, docid, grade_text;
    if (fields.size() == 3) {
      qid = fields[0];
      docid = fields[1];
      grade_text = fields[2];
    } else if (fields.size() == 4) {
      qid = fields[0];
      docid = fields[2];
      grade_text = fields[3];
    } else {
      fail("expected 3 or 4 fields, got " + std::to_string(fields.size()));
    }
    int grade = 0;
    try {
      std::size_t used = 0;
      grade = std::stoi(grade_text, &used);
      if (used != grade_text.size()) throw std::invalid_argument(grade_text);
    } catch (const std::exception&) {
      if (lineno == 1) continue;  // header row
      fail("non-integer relevance grade '" + grade_text + "'");
    }
    if (grade < 0) fail("negative relevance grade " + grade_text);
    auto& per_query = qrels[qid];
    if (!per_query.emplace(docid, grade).second)
      fail("duplicate judgment for query '" + qid + "', doc '" + docid + "'");
  }
  if (qrels.empty()) throw ParseError("no judgments in " + path.string());
  return qrels;
}

inline double ndcg_gain_value(int rel, NdcgGain gain) {
  if (gain == NdcgGain::Exponential)
    return std::pow(2.0, static_cast<double>(rel)) - 1.0;
  return static_cast<double>(rel);
}

/// nDCG@k over a ranked doc-id list: DCG sums gain(rel_i) / log2(i + 1) with
/// 1-based i, unjudged docs count as grade 0, the ideal ranking sorts every
/// judged grade descending and truncates at k. No positive judgment -> 0.
inline double ndcg_at_k(const std::vector<std::string>& ranked_docs,
                        const std::map<std::string, int>& judgments, int k,
                        NdcgGain gain = NdcgGain::Linear) {
  if (k < 1) throw ConfigError("ndcg k must be >= 1, got " + std::to_string(k));
  double dcg = 0.0;
  std::size_t depth = std::min(ranked_docs.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < depth; ++i) {
    auto it = judgments.find(ranked_docs[i]);
    int rel = it == judgments.end() ? 0 : it->second;
    dcg += ndcg_gain_value(rel, gain) /
           std::log2(static_cast<double>(i) + 2.0);
  }
  std::vector<int> grades;
  grades.reserve(judgments.size());
  for (const auto& [doc, rel] : judgments) grades.push_back(rel);
  std::sort(grades.begin(), grades.end(), std::greater<int>());
  double idcg = 0.0;
  std::size_t ideal_depth =
      std::min(grades.size(), static_cast<std::size_t>(k));
  for (std::size_t i = 0; i < ideal_depth; ++i)
    idcg += ndcg_gain_value(grades[i], gain) /
            std::log2(static_cast<double>(i) + 2.0);
  if (idcg == 0.0) return 0.0;
  return dcg / idcg;
}

struct MetricReport {
  std::map<std::string, double> per_query;
  double mean = 0.0;
  int k = 10;
  std::string tag;
  std::size_t evaluated = 0;
  std::size_t skipped_unjudged = 0;   // in run, absent from qrels
  std::size_t missing_from_run = 0;   // judged but never retrieved

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["metric"] = "ndcg_cut_" + std::to_string(k);
    doc["tag"] = tag;
    doc["mean"] = mean;
    doc["evaluated"] = evaluated;
    doc["skipped_unjudged"] = skipped_unjudged;
    doc["missing_from_run"] = missing_from_run;
    nlohmann::ordered_json per;
    for (const auto& [qid, v] : per_query) per[qid] = v;
    doc["per_query"] = std::move(per);
    return doc;
  }
};

/// Mean is over run queries that have judgments; unjudged run queries are
/// skipped and counted, judged-but-absent queries counted separately.
inline MetricReport evaluate_run(
    const std::map<std::string, std::vector<TrecRunLine>>& run,
    const Qrels& qrels, int k, NdcgGain gain = NdcgGain::Linear,
    std::string tag = "") {
  MetricReport report;
  report.k = k;
  report.tag = std::move(tag);
  double sum = 0.0;
  for (const auto& [qid, rows] : run) {
    auto it = qrels.find(qid);
    if (it == qrels.end()) {
      ++report.skipped_unjudged;
      continue;
    }
    std::vector<std::string> ranked;
    ranked.reserve(rows.size());
    for (const auto& r : rows) ranked.push_back(r.docid);
    double v = ndcg_at_k(ranked, it->second, k, gain);
    report.per_query[qid] = v;
    sum += v;
    ++report.evaluated;
  }
  for (const auto& [qid, judgments] : qrels)
    if (run.find(qid) == run.end()) ++report.missing_from_run;
  report.mean = report.evaluated == 0
                    ? 0.0
                    : sum / static_cast<double>(report.evaluated);
  return report;
}

// ---------------------------------------------------------------------------
// Significance

struct TTestResult {
  std::size_t n = 0;
  double mean_diff = 0.0;
  std::optional<double> t;
  std::optional<double> p;  // two-sided
  bool degenerate = false;  // zero-variance differences, no p-value
};

/// Paired two-sided t-test on per-query metric pairs. Zero-variance
/// differences are flagged degenerate instead of fabricating a p-value.
inline TTestResult paired_ttest(const std::vector<double>& a,
                                const std::vector<double>& b) {
  if (a.size() != b.size())
    throw ConfigError("paired t-test needs equal-length samples, got " +
                      std::to_string(a.size()) + " and " +
                      std::to_string(b.size()));
  if (a.size() < 2)
    throw ConfigError("paired t-test needs at least 2 pairs, got " +
                      std::to_string(a.size()));
  TTestResult r;
  r.n = a.size();
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  double mean = std::accumulate(d.begin(), d.end(), 0.0) /
                static_cast<double>(d.size());
  r.mean_diff = mean;
  double ss = 0.0;
  for (double v : d) ss += (v - mean) * (v - mean);
  double var = ss / static_cast<double>(d.size() - 1);
  if (var == 0.0) {
    r.degenerate = true;
    return r;
  }
  double t = mean / std::sqrt(var / static_cast<double>(d.size()));
  r.t = t;
  boost::math::students_t dist(static_cast<double>(d.size() - 1));
  r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
  return r;
}

/// Holm step-down adjustment. Returns adjusted p-values in the input order:
/// sort ascending, multiply the i-th smallest by (m - i), enforce
/// monotonicity with a running max, cap at 1.
inline std::vector<double> holm_adjust(const std::vector<double>& p) {
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0))
      throw ConfigError("p-value " + std::to_string(v) + " outside [0, 1]");
  std::size_t m = p.size();
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t i, std::size_t j) { return p[i] < p[j]; });
  std::vector<double> adjusted(m, 0.0);
  double running = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double scaled = static_cast<double>(m - i) * p[order[i]];
    running = std::max(running, scaled);
    adjusted[order[i]] = std::min(1.0, running);
  }
  return adjusted;
}

/// Baseline-vs-candidate comparison over the queries both runs evaluated.
struct RunComparison {
  std::string tag;
  double mean = 0.0;           // candidate mean over the common queries
  double baseline_mean = 0.0;  // baseline mean over the same queries
  TTestResult test;
  std::optional<double> p_adjusted;  // Holm over the whole comparison family
};

/// Pairs every candidate against the baseline on their common queries, then
/// Holm-adjusts the resulting p-value family. Degenerate tests keep no
/// p-value and sit out the adjustment.
inline std::vector<RunComparison> compare_runs(
    const MetricReport& baseline, const std::vector<MetricReport>& candidates) {
  std::vector<RunComparison> out;
  for (const auto& cand : candidates) {
    RunComparison cmp;
    cmp.tag = cand.tag;
    std::vector<double> base_vals, cand_vals;
    for (const auto& [qid, v] : baseline.per_query) {
      auto it = cand.per_query.find(qid);
      if (it == cand.per_query.end()) continue;
      base_vals.push_back(v);
      cand_vals.push_back(it->second);
    }
    if (base_vals.size() < 2)
      throw ConfigError("runs '" + baseline.tag + "' and '" + cand.tag +
                        "' share fewer than 2 evaluated queries");
    double bs = std::accumulate(base_vals.begin(), base_vals.end(), 0.0);
    double cs = std::accumulate(cand_vals.begin(), cand_vals.end(), 0.0);
    cmp.baseline_mean = bs / static_cast<double>(base_vals.size());
    cmp.mean = cs / static_cast<double>(cand_vals.size());
    cmp.test = paired_ttest(cand_vals, base_vals);
    out.push_back(std::move(cmp));
  }
  std::vector<double> family;
  std::vector<std::size_t> family_idx;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i].test.p.has_value()) {
      family.push_back(*out[i].test.p);
      family_idx.push_back(i);
    }
  }
  if (!family.empty()) {
    auto adjusted = holm_adjust(family);
    for (std::size_t i = 0; i < family_idx.size(); ++i)
      out[family_idx[i]].p_adjusted = adjusted[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cluster statistics

struct ClusterStats {
  std::size_t total = 0;
  std::array<std::size_t, 3> size_counts{};  // sets holding 1, 2, 3 queries
  std::array<double, 3> size_fractions{};
  std::optional<double> mean_pairwise_cos_size2;
  std::optional<double> mean_pairwise_cos_size3;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["total"] = total;
    for (int s = 1; s <= 3; ++s) {
      nlohmann::ordered_json bucket;
      bucket["count"] = size_counts[static_cast<std::size_t>(s - 1)];
      bucket["fraction"] = size_fractions[static_cast<std::size_t>(s - 1)];
      doc["size" + std::to_string(s)] = std::move(bucket);
    }
    if (mean_pairwise_cos_size2.has_value())
      doc["size2"]["mean_pairwise_cosine"] = *mean_pairwise_cos_size2;
    if (mean_pairwise_cos_size3.has_value())
      doc["size3"]["mean_pairwise_cosine"] = *mean_pairwise_cos_size3;
    return doc;
  }
};

/// Size histogram plus, for the multi-query buckets, how far apart the
/// cluster queries sit in embedding space (mean pairwise cosine).
inline ClusterStats compute_cluster_stats(
    const std::vector<ClusterSet>& sets, EmbeddingProvider& provider,
    const FileCache* cache = nullptr) {
  ClusterStats stats;
  stats.total = sets.size();
  double sum2 = 0.0, sum3 = 0.0;
  std::size_t n2 = 0, n3 = 0;
  for (const auto& set : sets) {
    std::size_t size = set.size();
    ++stats.size_counts[size - 1];
    if (size < 2) continue;
    std::vector<Embedding> embs;
    for (const auto& q : set.clusters())
      embs.push_back(embed_cached(q, provider, cache));
    double pair_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < embs.size(); ++i)
      for (std::size_t j = i + 1; j < embs.size(); ++j) {
        pair_sum += cosine_similarity(embs[i], embs[j]);
        ++pairs;
      }
    double mean_pair = pair_sum / static_cast<double>(pairs);
    if (size == 2) {
      sum2 += mean_pair;
      ++n2;
    } else {
      sum3 += mean_pair;
      ++n3;
    }
  }
  if (stats.total > 0)
    for (std::size_t s = 0; s < 3; ++s)
      stats.size_fractions[s] = static_cast<double>(stats.size_counts[s]) /
                                static_cast<double>(stats.total);
  if (n2 > 0) stats.mean_pairwise_cos_size2 = sum2 / static_cast<double>(n2);
  if (n3 > 0) stats.mean_pairwise_cos_size3 = sum3 / static_cast<double>(n3);
  return stats;
}

}  // namespace qreform
