#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qreform/aggregation.hpp"
#include "qreform/cache.hpp"
#include "qreform/config.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/evaluation.hpp"
#include "qreform/io.hpp"
#include "qreform/parsers.hpp"
#include "qreform/prompts.hpp"
#include "qreform/providers.hpp"
#include "qreform/qerm.hpp"
#include "qreform/retrieval.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// Variant string for calls at feedback-loop iteration t; parse retries get
/// their own suffix so a bad completion never poisons its cache slot.
inline std::string iteration_variant(int iteration, int attempt = 0) {
  std::string v = "iter" + std::to_string(iteration);
  if (attempt > 0) v += "/retry" + std::to_string(attempt);
  return v;
}

constexpr int kMaxParseRetries = 2;  // re-generations after a bad completion

/// Fan the query through every configured prompt, n samples each, one
/// provider call per prompt. Output order: config prompt order, then sample
/// index.
inline std::vector<ReformulatedQuery> generate_reformulations(
    const Query& q, const PipelineConfig& cfg, GenerationProvider& gen,
    const FileCache* cache, int iteration) {
  std::vector<ReformulatedQuery> out;
  for (PromptKind kind : cfg.prompt_kinds) {
    GenerationRequest req;
    req.prompt = render_prompt(kind, q);
    req.sampling = cfg.sampling;
    req.n_samples = cfg.n_per_prompt;
    req.variant = iteration_variant(iteration);
    GenerationResponse resp = generate(req, gen, cache);
    for (int j = 0; j < cfg.n_per_prompt; ++j) {
      ReformulatedQuery r;
      r.text = trim(resp.completions[static_cast<std::size_t>(j)]);
      r.prompt_kind = kind;
      r.generation_index = j;
      r.iteration = iteration;
      out.push_back(std::move(r));
    }
  }
  return out;
}

/// Condense the generated pool into 1-3 intent queries. An unparseable
/// completion triggers up to kMaxParseRetries fresh generations (distinct
/// cache slots); if all fail the error carries the last parse failure.
inline ClusterSet cluster_reformulations(
    const Query& q, const std::vector<std::string>& generated_texts,
    const PipelineConfig& cfg, GenerationProvider& gen, const FileCache* cache,
    int iteration) {
  std::string last_error;
  for (int attempt = 0; attempt <= kMaxParseRetries; ++attempt) {
    GenerationRequest req;
    req.prompt = render_prompt(PromptKind::ClusteringGeneration, q,
                               generated_texts);
    req.sampling = cfg.sampling;
    req.n_samples = 1;
    req.variant = iteration_variant(iteration, attempt);
    GenerationResponse resp = generate(req, gen, cache);
    try {
      return parse_cluster_output(resp.completions[0], iteration);
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw ParseError("clustering output for query '" + q.id +
                   "' unparseable after " +
                   std::to_string(kMaxParseRetries + 1) +
                   " attempts; last error: " + last_error);
}

/// Judge each cluster query on the 1-100 scale. Same retry policy as
/// clustering.
inline ScoreList score_clusters(const Query& q, const ClusterSet& clusters,
                                const PipelineConfig& cfg,
                                GenerationProvider& gen,
                                const FileCache* cache, int iteration) {
  std::string last_error;
  for (int attempt = 0; attempt <= kMaxParseRetries; ++attempt) {
    GenerationRequest req;
    req.prompt =
        render_prompt(PromptKind::Scoring, q, clusters.clusters());
    req.sampling = cfg.sampling;
    req.n_samples = 1;
    req.variant = iteration_variant(iteration, attempt);
    GenerationResponse resp = generate(req, gen, cache);
    try {
      return parse_score_output(resp.completions[0],
                                static_cast<int>(clusters.size()));
    } catch (const ParseError& e) {
      last_error = e.what();
    }
  }
  throw ParseError("score output for query '" + q.id +
                   "' unparseable after " +
                   std::to_string(kMaxParseRetries + 1) +
                   " attempts; last error: " + last_error);
}

inline AggregatedQuery aggregate_for_query(
    const Query& q, const Embedding& e_init, const ClusterSet& clusters,
    const std::optional<ScoreList>& scores, const PipelineConfig& cfg,
    EmbeddingProvider& emb, const FileCache* cache) {
  AggregationInputs in;
  in.init_text = q.text;
  in.ref_texts = clusters.clusters();
  if (cfg.aggregation_strategy != AggregationStrategy::DC) {
    in.init_embedding = e_init;
    for (const auto& t : in.ref_texts)
      in.ref_embeddings.push_back(embed_cached(t, emb, cache));
  }
  in.scores = scores;
  return aggregate(in, cfg.aggregation_strategy, cfg.w0, cfg.sim_threshold,
                   cfg.score_threshold);
}

inline std::vector<SearchResult> retrieve_for_query(
    const AggregatedQuery& agg, const DocIndex& index,
    const PipelineConfig& cfg, EmbeddingProvider& emb,
    const FileCache* cache) {
  if (agg.embedding.has_value())
    return index.search(*agg.embedding, cfg.top_k, cfg.score_fn);
  return index.search(embed_cached(*agg.text, emb, cache), cfg.top_k,
                      cfg.score_fn);
}

// ---------------------------------------------------------------------------
// Whole-run orchestration

struct QueryRunRecord {
  Query query;
  Embedding e_init;
  std::vector<ReformulatedQuery> generated;  // all iterations, in call order
  std::optional<ClusterSet> clusters;        // the chosen set
  std::optional<ScoreList> scores;
  AggregatedQuery aggregated;
  std::vector<SearchResult> results;
  std::optional<LoopOutcome> loop;
  double first_pass_logit = 0.0;
};

struct QermRunInfo {
  double epsilon = 0.0;
  std::size_t accepted = 0;
  std::size_t returned_best = 0;
  std::size_t regenerations = 0;
};

struct RunSummary {
  std::vector<QueryRunRecord> records;
  std::vector<TrecRunLine> run_lines;
  std::optional<MetricReport> metrics;
  std::optional<QermRunInfo> qerm;
  std::string tag;
};

/// The whole pipeline for a query set, no files touched. Stages run in
/// query-parallel waves; every artifact-visible value is a deterministic
/// function of (config, inputs, provider ids), so reruns reproduce results
/// whether or not the cache is warm.
inline RunSummary run_in_memory(const PipelineConfig& cfg,
                                const std::vector<Query>& queries,
                                const DocIndex& index, const Qrels* qrels,
                                GenerationProvider& gen,
                                EmbeddingProvider& emb, const FileCache* cache,
                                const QermModel* qerm_model = nullptr,
                                int eval_k = 10, std::string tag = "") {
  if (queries.empty()) throw ConfigError("no queries to run");
  {
    std::set<std::string> ids;
    for (const auto& q : queries)
      if (!ids.insert(q.id).second)
        throw ConfigError("duplicate query id '" + q.id + "'");
  }
  if (static_cast<int>(index.dim()) != emb.dim())
    throw DimensionError("index dim " + std::to_string(index.dim()) +
                         " does not match embedding provider dim " +
                         std::to_string(emb.dim()));

  RunSummary summary;
  summary.tag = tag.empty()
                    ? std::string("qreform-") +
                          to_string(cfg.aggregation_strategy) +
                          (qerm_model != nullptr ? "-qerm" : "")
                    : std::move(tag);
  summary.records.resize(queries.size());

  parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
    QueryRunRecord& rec = summary.records[i];
    rec.query = queries[i];
    rec.e_init = embed_cached(rec.query.text, emb, cache);
    rec.generated = generate_reformulations(rec.query, cfg, gen, cache, 0);
    std::vector<std::string> texts;
    for (const auto& g : rec.generated) texts.push_back(g.text);
    rec.clusters =
        cluster_reformulations(rec.query, texts, cfg, gen, cache, 0);
  });

  if (qerm_model != nullptr) {
    if (qerm_model->embedding_dim != emb.dim())
      throw DimensionError("reward model embedding dim " +
                           std::to_string(qerm_model->embedding_dim) +
                           " does not match provider dim " +
                           std::to_string(emb.dim()));
    parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
      QueryRunRecord& rec = summary.records[i];
      ModelScorer scorer(*qerm_model, rec.e_init, emb, cache);
      rec.first_pass_logit = scorer.score(*rec.clusters);
    });
    double sum = 0.0;
    for (const auto& rec : summary.records) sum += rec.first_pass_logit;
    QermRunInfo info;
    info.epsilon = sum / static_cast<double>(summary.records.size());

    parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
      QueryRunRecord& rec = summary.records[i];
      ModelScorer scorer(*qerm_model, rec.e_init, emb, cache);
      auto regenerate = [&](int iteration) {
        auto gens =
            generate_reformulations(rec.query, cfg, gen, cache, iteration);
        std::vector<std::string> texts;
        for (const auto& g : gens) texts.push_back(g.text);
        rec.generated.insert(rec.generated.end(), gens.begin(), gens.end());
        return cluster_reformulations(rec.query, texts, cfg, gen, cache,
                                      iteration);
      };
      rec.loop = run_feedback_loop(*rec.clusters, regenerate, scorer,
                                   info.epsilon, cfg.max_iterations);
      rec.clusters = rec.loop->chosen;
    });
    for (const auto& rec : summary.records) {
      if (rec.loop->terminal == "accept")
        ++info.accepted;
      else
        ++info.returned_best;
      for (const auto& row : rec.loop->history)
        if (row.decision == "regenerate") ++info.regenerations;
    }
    summary.qerm = info;
  }

  if (cfg.aggregation_strategy == AggregationStrategy::ScoreDW) {
    parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
      QueryRunRecord& rec = summary.records[i];
      rec.scores =
          score_clusters(rec.query, *rec.clusters, cfg, gen, cache,
                         rec.clusters->source_iteration());
    });
  }

  parallel_for(queries.size(), cfg.parallelism, [&](std::size_t i) {
    QueryRunRecord& rec = summary.records[i];
    rec.aggregated = aggregate_for_query(rec.query, rec.e_init, *rec.clusters,
                                         rec.scores, cfg, emb, cache);
    rec.results = retrieve_for_query(rec.aggregated, index, cfg, emb, cache);
  });

  for (const auto& rec : summary.records)
    for (const auto& r : rec.results)
      summary.run_lines.push_back(
          {rec.query.id, r.doc_id, r.rank, r.score, summary.tag});

  if (qrels != nullptr)
    summary.metrics = evaluate_run(group_run(summary.run_lines), *qrels,
                                   eval_k, cfg.ndcg_gain, summary.tag);
  return summary;
}

// ---------------------------------------------------------------------------
// Artifacts

struct RunPaths {
  std::filesystem::path generated;
  std::filesystem::path clusters;
  std::filesystem::path scores;
  std::filesystem::path bundles;
  std::filesystem::path aggregated;
  std::filesystem::path run;
  std::filesystem::path metrics;
  std::filesystem::path manifest;
  std::filesystem::path qerm_loop;
};

inline RunPaths make_run_paths(const std::filesystem::path& out_dir) {
  RunPaths p;
  p.generated = out_dir / "gen.jsonl";
  p.clusters = out_dir / "clusters.jsonl";
  p.scores = out_dir / "scores.jsonl";
  p.bundles = out_dir / "bundles.jsonl";
  p.aggregated = out_dir / "aggregated.jsonl";
  p.run = out_dir / "run.trec";
  p.metrics = out_dir / "metrics.json";
  p.manifest = out_dir / "manifest.json";
  p.qerm_loop = out_dir / "qerm_loop.jsonl";
  return p;
}

/// Everything except the manifest is a pure function of the run inputs;
/// the manifest additionally carries wall-clock timing.
inline RunPaths write_run_artifacts(const std::filesystem::path& out_dir,
                                    const PipelineConfig& cfg,
                                    const RunSummary& summary,
                                    const std::string& gen_id,
                                    const std::string& emb_id,
                                    std::size_t corpus_docs,
                                    double elapsed_ms) {
  std::filesystem::create_directories(out_dir);
  RunPaths paths = make_run_paths(out_dir);

  std::vector<nlohmann::ordered_json> gen_rows;
  for (const auto& rec : summary.records)
    for (const auto& g : rec.generated) {
      nlohmann::ordered_json row;
      row["qid"] = rec.query.id;
      row["iteration"] = g.iteration;
      row["prompt_kind"] = to_string(g.prompt_kind);
      row["sample_index"] = g.generation_index;
      row["text"] = g.text;
      gen_rows.push_back(std::move(row));
    }
  write_jsonl(paths.generated, gen_rows);

  std::vector<nlohmann::ordered_json> cluster_rows;
  for (const auto& rec : summary.records) {
    nlohmann::ordered_json row;
    row["qid"] = rec.query.id;
    row["iteration"] = rec.clusters->source_iteration();
    row["clusters"] = rec.clusters->to_json();
    cluster_rows.push_back(std::move(row));
  }
  write_jsonl(paths.clusters, cluster_rows);

  if (cfg.aggregation_strategy == AggregationStrategy::ScoreDW) {
    std::vector<nlohmann::ordered_json> score_rows;
    for (const auto& rec : summary.records) {
      nlohmann::ordered_json row;
      row["qid"] = rec.query.id;
      row["scores"] = rec.scores->scores;
      score_rows.push_back(std::move(row));
    }
    write_jsonl(paths.scores, score_rows);
  }

  std::vector<nlohmann::ordered_json> bundle_rows;
  std::vector<nlohmann::ordered_json> agg_rows;
  for (const auto& rec : summary.records) {
    nlohmann::ordered_json brow;
    brow["qid"] = rec.query.id;
    brow["bundle"] = rec.aggregated.bundle.to_json();
    bundle_rows.push_back(std::move(brow));

    nlohmann::ordered_json arow;
    arow["qid"] = rec.query.id;
    arow["strategy"] = to_string(rec.aggregated.strategy);
    if (rec.aggregated.embedding.has_value())
      arow["embedding"] = *rec.aggregated.embedding;
    if (rec.aggregated.text.has_value()) arow["text"] = *rec.aggregated.text;
    agg_rows.push_back(std::move(arow));
  }
  write_jsonl(paths.bundles, bundle_rows);
  write_jsonl(paths.aggregated, agg_rows);

  write_trec_run(paths.run, summary.run_lines);

  if (summary.metrics.has_value())
    atomic_write_file(paths.metrics, summary.metrics->to_json().dump(2) + "\n");

  if (summary.qerm.has_value()) {
    std::vector<nlohmann::ordered_json> loop_rows;
    for (const auto& rec : summary.records) {
      nlohmann::ordered_json row;
      row["qid"] = rec.query.id;
      row["epsilon"] = summary.qerm->epsilon;
      row["first_pass_logit"] = rec.first_pass_logit;
      row["terminal"] = rec.loop->terminal;
      row["chosen_iteration"] = rec.loop->chosen_iteration;
      auto hist = nlohmann::ordered_json::array();
      for (const auto& h : rec.loop->history) {
        nlohmann::ordered_json hrow;
        hrow["iteration"] = h.iteration;
        hrow["logit"] = h.logit;
        hrow["decision"] = h.decision;
        hrow["clusters"] = h.clusters.to_json();
        hist.push_back(std::move(hrow));
      }
      row["history"] = std::move(hist);
      loop_rows.push_back(std::move(row));
    }
    write_jsonl(paths.qerm_loop, loop_rows);
  }

  nlohmann::ordered_json manifest;
  manifest["schema"] = "run-manifest-v1";
  manifest["tag"] = summary.tag;
  manifest["config"] = config_to_json(cfg);
  manifest["generation_provider"] = gen_id;
  manifest["embedding_provider"] = emb_id;
  manifest["sampling_mode"] = "single_call_n_samples";
  manifest["queries"] = summary.records.size();
  manifest["corpus_docs"] = corpus_docs;
  nlohmann::ordered_json qinfo;
  qinfo["active"] = summary.qerm.has_value();
  if (summary.qerm.has_value()) {
    qinfo["epsilon"] = summary.qerm->epsilon;
    qinfo["accepted"] = summary.qerm->accepted;
    qinfo["returned_best"] = summary.qerm->returned_best;
    qinfo["regenerations"] = summary.qerm->regenerations;
  }
  manifest["qerm"] = std::move(qinfo);
  manifest["elapsed_ms"] = elapsed_ms;
  atomic_write_file(paths.manifest, manifest.dump(2) + "\n");
  return paths;
}

struct PipelineRunResult {
  RunSummary summary;
  RunPaths paths;
};

inline PipelineRunResult run_pipeline(const PipelineConfig& cfg,
                                      const std::vector<Query>& queries,
                                      const DocIndex& index,
                                      const Qrels* qrels,
                                      GenerationProvider& gen,
                                      EmbeddingProvider& emb,
                                      const FileCache* cache,
                                      const QermModel* qerm_model,
                                      const std::filesystem::path& out_dir,
                                      int eval_k = 10, std::string tag = "") {
  auto t0 = std::chrono::steady_clock::now();
  RunSummary summary = run_in_memory(cfg, queries, index, qrels, gen, emb,
                                     cache, qerm_model, eval_k,
                                     std::move(tag));
  double elapsed_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();
  RunPaths paths = write_run_artifacts(out_dir, cfg, summary, gen.id(),
                                       emb.id(), index.size(), elapsed_ms);
  return {std::move(summary), std::move(paths)};
}

// ---------------------------------------------------------------------------
// Reward-model dataset assembly

struct DatasetBuildResult {
  std::vector<QermExample> examples;
  std::vector<std::pair<std::string, std::string>> skipped;  // qid, reason
};

/// Turns a scored run into reward-model training rows. Queries without
/// judgments cannot be labeled and are skipped with a reason, never
/// silently dropped.
inline DatasetBuildResult build_training_set(const RunSummary& summary,
                                             const PipelineConfig& cfg,
                                             EmbeddingProvider& emb,
                                             const FileCache* cache) {
  if (!summary.metrics.has_value())
    throw ConfigError("training-set assembly needs an evaluated run");
  DatasetBuildResult out;
  for (const auto& rec : summary.records) {
    auto it = summary.metrics->per_query.find(rec.query.id);
    if (it == summary.metrics->per_query.end()) {
      out.skipped.emplace_back(rec.query.id, "no_judgments");
      continue;
    }
    std::vector<Embedding> cluster_embs;
    for (const auto& c : rec.clusters->clusters())
      cluster_embs.push_back(embed_cached(c, emb, cache));
    QermExample ex;
    ex.qid = rec.query.id;
    ex.features = featurize(rec.e_init, cluster_embs);
    ex.ndcg = it->second;
    ex.label = quality_label(ex.ndcg, cfg.ndcg_label_threshold);
    out.examples.push_back(std::move(ex));
  }
  if (out.examples.empty())
    throw ConfigError("no judged queries; training set would be empty");
  return out;
}

inline void write_examples_jsonl(const std::filesystem::path& path,
                                 const std::vector<QermExample>& examples) {
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& ex : examples) {
    nlohmann::ordered_json row;
    row["qid"] = ex.qid;
    row["label"] = ex.label;
    row["ndcg"] = ex.ndcg;
    row["features"] = ex.features;
    rows.push_back(std::move(row));
  }
  write_jsonl(path, rows);
}

inline std::vector<QermExample> load_examples_jsonl(
    const std::filesystem::path& path) {
  std::vector<QermExample> examples;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("qid") || !doc.contains("label") ||
        !doc.contains("features") || !doc["features"].is_array())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": example line needs qid, label, features");
    QermExample ex;
    ex.qid = doc["qid"].get<std::string>();
    ex.label = doc["label"].get<int>();
    if (ex.label != 0 && ex.label != 1)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": label must be 0 or 1");
    ex.ndcg = doc.value("ndcg", 0.0);
    for (const auto& v : doc["features"]) ex.features.push_back(v.get<double>());
    examples.push_back(std::move(ex));
  });
  if (examples.empty()) throw ParseError("no examples in " + path.string());
  return examples;
}

// ---------------------------------------------------------------------------
// Ablation sweeps

struct AblationRow {
  std::string sweep;
  std::string label;
  double value = 0.0;
  double mean_ndcg = 0.0;
  std::size_t runs = 1;  // configurations averaged into this row
};

namespace detail {

inline std::string format_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

inline void combinations(std::size_t n, std::size_t k,
                         std::vector<std::vector<std::size_t>>& out) {
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  while (true) {
    out.push_back(idx);
    std::size_t i = k;
    while (i > 0 && idx[i - 1] == n - k + i - 1) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < k; ++j) idx[j] = idx[j - 1] + 1;
  }
}

}  // namespace detail

/// Parameter sweeps over full in-memory runs. Sweeps: "w0" (0.3-0.9 by 0.1),
/// "prompts" (1-4 prompts, averaging every combination of that size),
/// "sim_threshold" (0.1-0.3), "score_threshold" (40-70). The reward loop
/// stays off so rows isolate the swept parameter.
inline std::vector<AblationRow> run_ablation(
    const std::string& sweep, PipelineConfig base,
    const std::vector<Query>& queries, const DocIndex& index,
    const Qrels& qrels, GenerationProvider& gen, EmbeddingProvider& emb,
    const FileCache* cache, int eval_k = 10) {
  auto mean_of = [&](const PipelineConfig& cfg) {
    RunSummary s = run_in_memory(cfg, queries, index, &qrels, gen, emb, cache,
                                 nullptr, eval_k);
    return s.metrics->mean;
  };

  std::vector<AblationRow> rows;
  if (sweep == "w0") {
    for (int i = 0; i <= 6; ++i) {
      double v = 0.3 + 0.1 * static_cast<double>(i);
      PipelineConfig cfg = base;
      cfg.w0 = v;
      rows.push_back({sweep, detail::format_value(v), v, mean_of(cfg), 1});
    }
  } else if (sweep == "prompts") {
    const auto& kinds = all_generation_kinds();
    for (std::size_t count = 1; count <= kinds.size(); ++count) {
      std::vector<std::vector<std::size_t>> combos;
      detail::combinations(kinds.size(), count, combos);
      double sum = 0.0;
      for (const auto& combo : combos) {
        PipelineConfig cfg = base;
        cfg.prompt_kinds.clear();
        for (std::size_t idx : combo) cfg.prompt_kinds.push_back(kinds[idx]);
        sum += mean_of(cfg);
      }
      rows.push_back({sweep, std::to_string(count),
                      static_cast<double>(count),
                      sum / static_cast<double>(combos.size()),
                      combos.size()});
    }
  } else if (sweep == "sim_threshold") {
    for (double v : {0.1, 0.15, 0.2, 0.25, 0.3}) {
      PipelineConfig cfg = base;
      cfg.aggregation_strategy = AggregationStrategy::SimDW;
      cfg.sim_threshold = v;
      rows.push_back({sweep, detail::format_value(v), v, mean_of(cfg), 1});
    }
  } else if (sweep == "score_threshold") {
    for (double v : {40.0, 50.0, 60.0, 70.0}) {
      PipelineConfig cfg = base;
      cfg.aggregation_strategy = AggregationStrategy::ScoreDW;
      cfg.score_threshold = v;
      rows.push_back({sweep, detail::format_value(v), v, mean_of(cfg), 1});
    }
  } else {
    throw ConfigError("unknown ablation sweep '" + sweep +
                      "' (expected w0, prompts, sim_threshold, "
                      "score_threshold)");
  }
  return rows;
}

inline nlohmann::ordered_json ablation_to_json(
    const std::vector<AblationRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    nlohmann::ordered_json row;
    row["sweep"] = r.sweep;
    row["label"] = r.label;
    row["value"] = r.value;
    row["mean_ndcg"] = r.mean_ndcg;
    row["runs"] = r.runs;
    arr.push_back(std::move(row));
  }
  return arr;
}

// ---------------------------------------------------------------------------
// Fine-tune pair export

struct FinetuneExportReport {
  std::size_t written = 0;
  std::size_t skipped = 0;
};

/// Emits (initial query, best cluster query) pairs. Each cluster query is
/// judged alone through the scoring prompt; the top scorer becomes the
/// target. Queries whose scoring never parses are skipped and counted, not
/// fatal.
inline FinetuneExportReport export_finetune_pairs(
    const std::filesystem::path& out_path, const RunSummary& summary,
    const PipelineConfig& cfg, GenerationProvider& gen,
    const FileCache* cache) {
  FinetuneExportReport report;
  std::vector<nlohmann::ordered_json> rows;
  for (const auto& rec : summary.records) {
    const auto& clusters = rec.clusters->clusters();
    std::vector<double> scores;
    bool failed = false;
    for (std::size_t i = 0; i < clusters.size() && !failed; ++i) {
      std::optional<double> score;
      for (int attempt = 0; attempt <= kMaxParseRetries; ++attempt) {
        GenerationRequest req;
        req.prompt = render_prompt(PromptKind::Scoring, rec.query,
                                   std::vector<std::string>{clusters[i]});
        req.sampling = cfg.sampling;
        req.n_samples = 1;
        req.variant = "ft" + std::to_string(i) +
                      (attempt > 0 ? "/retry" + std::to_string(attempt) : "");
        GenerationResponse resp = generate(req, gen, cache);
        try {
          score = parse_score_output(resp.completions[0], 1).scores[0];
          break;
        } catch (const ParseError&) {
        }
      }
      if (!score.has_value())
        failed = true;
      else
        scores.push_back(*score);
    }
    if (failed) {
      ++report.skipped;
      continue;
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < scores.size(); ++i)
      if (scores[i] > scores[best]) best = i;
    nlohmann::ordered_json row;
    row["query_id"] = rec.query.id;
    row["input"] = rec.query.text;
    row["target"] = clusters[best];
    row["score"] = scores[best];
    rows.push_back(std::move(row));
    ++report.written;
  }
  write_jsonl(out_path, rows);
  return report;
}

}  // namespace qreform
