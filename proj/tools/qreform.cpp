// Command-line front end for the query-reformulation pipeline. Stage
// subcommands (generate, cluster, score, aggregate, retrieve, evaluate)
// read and write artifacts in --out-dir so a pipeline can be replayed or
// resumed step by step; `run` does the whole thing in one go.

#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "qreform/http_provider.hpp"
#include "qreform/qreform.hpp"

namespace {

using namespace qreform;

struct CommonOpts {
  std::string config_path;
  std::string dataset_dir;
  std::string cache_dir;
  std::string out_dir = "out";
  std::string provider = "mock";
  std::string fixture_path;
  std::string http_base;
  std::string http_model = "default";
  std::string embeddings_path;
  std::string qrels_path;
  std::string qerm_model_path;
  std::string tag;
  std::uint64_t seed = 0;
  int emb_dim = 64;
  int eval_k = 10;
  bool explain = false;
  std::optional<std::string> strategy;
  std::optional<double> w0;
  std::optional<double> sim_threshold;
  std::optional<double> score_threshold;
  std::optional<int> n_per_prompt;
  std::optional<int> max_iterations;
  std::optional<int> top_k;
  std::optional<int> parallelism;
};

void add_config_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--config", o.config_path, "pipeline config JSON file");
  sub->add_option("--strategy", o.strategy,
                  "aggregation strategy: dc, fw, simdw, scoredw");
  sub->add_option("--w0", o.w0, "initial-query weight");
  sub->add_option("--sim-threshold", o.sim_threshold,
                  "similarity inclusion threshold");
  sub->add_option("--score-threshold", o.score_threshold,
                  "score inclusion threshold (1-100)");
  sub->add_option("--n-per-prompt", o.n_per_prompt, "samples per prompt");
  sub->add_option("--max-iterations", o.max_iterations,
                  "max feedback-loop regenerations");
  sub->add_option("--top-k", o.top_k, "retrieval depth");
  sub->add_option("--parallelism", o.parallelism, "worker threads");
}

void add_provider_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--provider", o.provider,
                  "generation provider: mock, fixture, http");
  sub->add_option("--fixture", o.fixture_path,
                  "replay fixture file (provider=fixture)");
  sub->add_option("--http-base", o.http_base,
                  "chat endpoint base URL (provider=http)");
  sub->add_option("--http-model", o.http_model, "chat model name");
  sub->add_option("--seed", o.seed, "seed for mock provider and embedder");
  sub->add_option("--emb-dim", o.emb_dim, "hash embedder dimension");
  sub->add_option("--cache-dir", o.cache_dir,
                  "content-addressed cache directory");
}

void add_dataset_flags(CLI::App* sub, CommonOpts& o) {
  sub->add_option("--dataset-dir", o.dataset_dir,
                  "directory holding corpus.jsonl, queries.jsonl, qrels.tsv")
      ->required();
  sub->add_option("--qrels", o.qrels_path,
                  "qrels file (default <dataset-dir>/qrels.tsv)");
  sub->add_option("--embeddings", o.embeddings_path,
                  "precomputed corpus embeddings JSONL");
  sub->add_option("--out-dir", o.out_dir, "artifact directory");
}

PipelineConfig make_config(const CommonOpts& o) {
  PipelineConfig cfg =
      o.config_path.empty() ? PipelineConfig{} : load_config(o.config_path);
  if (o.strategy) cfg.aggregation_strategy = strategy_from_string(*o.strategy);
  if (o.w0) cfg.w0 = *o.w0;
  if (o.sim_threshold) cfg.sim_threshold = *o.sim_threshold;
  if (o.score_threshold) cfg.score_threshold = *o.score_threshold;
  if (o.n_per_prompt) cfg.n_per_prompt = *o.n_per_prompt;
  if (o.max_iterations) cfg.max_iterations = *o.max_iterations;
  if (o.top_k) cfg.top_k = *o.top_k;
  if (o.parallelism) cfg.parallelism = *o.parallelism;
  return validate_config(cfg);
}

std::unique_ptr<GenerationProvider> make_gen_provider(const CommonOpts& o) {
  if (o.provider == "mock")
    return std::make_unique<MockGenerationProvider>(o.seed);
  if (o.provider == "fixture") {
    if (o.fixture_path.empty())
      throw ConfigError("provider=fixture needs --fixture FILE");
    return std::make_unique<ReplayFixtureProvider>(
        ReplayFixtureProvider::from_file(o.fixture_path));
  }
  if (o.provider == "http") {
    HttpProviderOptions h;
    // Environment wins for endpoint and key; nothing else is env-driven.
    const char* base = std::getenv("QREFORM_API_BASE");
    const char* key = std::getenv("QREFORM_API_KEY");
    h.base_url = base != nullptr ? base : o.http_base;
    h.api_key = key != nullptr ? key : "";
    h.model = o.http_model;
    if (h.base_url.empty())
      throw ConfigError("provider=http needs --http-base or QREFORM_API_BASE");
    return std::make_unique<HttpChatProvider>(h);
  }
  throw ConfigError("unknown provider '" + o.provider +
                    "' (expected mock, fixture, http)");
}

struct Dataset {
  std::vector<Query> queries;
  std::vector<CorpusDoc> corpus;
  std::optional<Qrels> qrels;
};

Dataset load_dataset(const CommonOpts& o, bool need_corpus, bool need_qrels) {
  namespace fs = std::filesystem;
  Dataset d;
  d.queries = load_queries_jsonl(fs::path(o.dataset_dir) / "queries.jsonl");
  if (need_corpus)
    d.corpus = load_corpus_jsonl(fs::path(o.dataset_dir) / "corpus.jsonl");
  fs::path qrels = o.qrels_path.empty()
                       ? fs::path(o.dataset_dir) / "qrels.tsv"
                       : fs::path(o.qrels_path);
  if (fs::exists(qrels)) {
    d.qrels = load_qrels(qrels);
  } else if (need_qrels) {
    throw ConfigError("qrels file not found: " + qrels.string());
  }
  return d;
}

std::optional<FileCache> make_cache(const CommonOpts& o) {
  if (o.cache_dir.empty()) return std::nullopt;
  return FileCache(o.cache_dir);
}

DocIndex build_index(const CommonOpts& o, const Dataset& d,
                     EmbeddingProvider& emb, const FileCache* cache,
                     int parallelism) {
  if (!o.embeddings_path.empty()) {
    auto report = index_corpus_precomputed(
        d.corpus, load_embeddings_jsonl(o.embeddings_path));
    if (report.missing > 0)
      std::cerr << "note: " << report.missing
                << " corpus docs lack a precomputed embedding and were "
                   "skipped\n";
    return std::move(report.index);
  }
  return index_corpus(d.corpus, emb, cache, parallelism);
}

// ---------------------------------------------------------------------------
// Stage-artifact readers

std::unordered_map<std::string, std::vector<std::string>> read_generated(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, std::vector<std::string>> by_qid;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("qid") || !doc.contains("text"))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": generated row needs qid and text");
    if (doc.value("iteration", 0) != 0) return;  // later loop iterations
    by_qid[doc["qid"].get<std::string>()].push_back(
        doc["text"].get<std::string>());
  });
  return by_qid;
}

std::unordered_map<std::string, ClusterSet> read_clusters(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, ClusterSet> by_qid;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("qid") || !doc.contains("clusters"))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": cluster row needs qid and clusters");
    std::vector<std::string> values;
    for (const auto& [key, v] : doc["clusters"].items()) {
      (void)key;
      values.push_back(v.get<std::string>());
    }
    by_qid.emplace(doc["qid"].get<std::string>(),
                   ClusterSet(std::move(values), doc.value("iteration", 0)));
  });
  return by_qid;
}

std::unordered_map<std::string, ScoreList> read_scores(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, ScoreList> by_qid;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("qid") || !doc.contains("scores"))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": score row needs qid and scores");
    std::vector<double> values;
    for (const auto& v : doc["scores"]) values.push_back(v.get<double>());
    by_qid.emplace(doc["qid"].get<std::string>(),
                   make_score_list(std::move(values)));
  });
  return by_qid;
}

struct AggRow {
  AggregationStrategy strategy = AggregationStrategy::SimDW;
  std::optional<Embedding> embedding;
  std::optional<std::string> text;
};

std::unordered_map<std::string, AggRow> read_aggregated(
    const std::filesystem::path& path) {
  std::unordered_map<std::string, AggRow> by_qid;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("qid") || !doc.contains("strategy"))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": aggregated row needs qid and strategy");
    AggRow row;
    row.strategy = strategy_from_string(doc["strategy"].get<std::string>());
    if (doc.contains("embedding")) {
      Embedding e;
      for (const auto& v : doc["embedding"]) e.push_back(v.get<double>());
      row.embedding = std::move(e);
    }
    if (doc.contains("text")) row.text = doc["text"].get<std::string>();
    if (!row.embedding.has_value() && !row.text.has_value())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": aggregated row needs an embedding or a text");
    by_qid.emplace(doc["qid"].get<std::string>(), std::move(row));
  });
  return by_qid;
}

template <typename Map>
const typename Map::mapped_type& require_row(const Map& m,
                                             const std::string& qid,
                                             const char* artifact) {
  auto it = m.find(qid);
  if (it == m.end())
    throw ConfigError("query '" + qid + "' has no row in " +
                      std::string(artifact));
  return it->second;
}

void print_explain(const WeightedQueryBundle& bundle, const std::string& qid) {
  std::printf("query %s  strategy=%s  w0=%g\n", qid.c_str(),
              to_string(bundle.strategy), bundle.w0);
  std::printf("  %-50s %10s %10s %-9s %s\n", "candidate", "signal", "weight",
              "included", "reason");
  for (const auto& e : bundle.entries) {
    std::string text = e.text.size() > 50 ? e.text.substr(0, 47) + "..."
                                          : e.text;
    std::printf("  %-50s %10s %10.4f %-9s %s\n", text.c_str(),
                e.signal.has_value()
                    ? std::to_string(*e.signal).substr(0, 6).c_str()
                    : "-",
                e.weight, e.included ? "yes" : "no", e.reason.c_str());
  }
}

// ---------------------------------------------------------------------------
// Subcommand drivers

void cmd_generate(const CommonOpts& o) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, false, false);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;

  std::vector<std::vector<ReformulatedQuery>> per_query(d.queries.size());
  parallel_for(d.queries.size(), cfg.parallelism, [&](std::size_t i) {
    per_query[i] = generate_reformulations(d.queries[i], cfg, *gen, cp, 0);
  });
  std::vector<nlohmann::ordered_json> rows;
  for (std::size_t i = 0; i < d.queries.size(); ++i)
    for (const auto& g : per_query[i]) {
      nlohmann::ordered_json row;
      row["qid"] = d.queries[i].id;
      row["iteration"] = g.iteration;
      row["prompt_kind"] = to_string(g.prompt_kind);
      row["sample_index"] = g.generation_index;
      row["text"] = g.text;
      rows.push_back(std::move(row));
    }
  auto path = make_run_paths(o.out_dir).generated;
  write_jsonl(path, rows);
  std::cerr << "wrote " << rows.size() << " reformulations to "
            << path.string() << "\n";
}

void cmd_cluster(const CommonOpts& o) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, false, false);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  RunPaths paths = make_run_paths(o.out_dir);
  auto generated = read_generated(paths.generated);

  std::vector<std::optional<ClusterSet>> sets(d.queries.size());
  parallel_for(d.queries.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& texts =
        require_row(generated, d.queries[i].id, "gen.jsonl");
    sets[i] = cluster_reformulations(d.queries[i], texts, cfg, *gen, cp, 0);
  });
  std::vector<nlohmann::ordered_json> rows;
  for (std::size_t i = 0; i < d.queries.size(); ++i) {
    nlohmann::ordered_json row;
    row["qid"] = d.queries[i].id;
    row["iteration"] = sets[i]->source_iteration();
    row["clusters"] = sets[i]->to_json();
    rows.push_back(std::move(row));
  }
  write_jsonl(paths.clusters, rows);
  std::cerr << "wrote " << rows.size() << " cluster sets to "
            << paths.clusters.string() << "\n";
}

void cmd_score(const CommonOpts& o) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, false, false);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  RunPaths paths = make_run_paths(o.out_dir);
  auto clusters = read_clusters(paths.clusters);

  std::vector<std::optional<ScoreList>> scores(d.queries.size());
  parallel_for(d.queries.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& set = require_row(clusters, d.queries[i].id, "clusters.jsonl");
    scores[i] = score_clusters(d.queries[i], set, cfg, *gen, cp,
                               set.source_iteration());
  });
  std::vector<nlohmann::ordered_json> rows;
  for (std::size_t i = 0; i < d.queries.size(); ++i) {
    nlohmann::ordered_json row;
    row["qid"] = d.queries[i].id;
    row["scores"] = scores[i]->scores;
    rows.push_back(std::move(row));
  }
  write_jsonl(paths.scores, rows);
  std::cerr << "wrote " << rows.size() << " score lists to "
            << paths.scores.string() << "\n";
}

void cmd_aggregate(const CommonOpts& o) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, false, false);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  RunPaths paths = make_run_paths(o.out_dir);
  auto clusters = read_clusters(paths.clusters);
  std::unordered_map<std::string, ScoreList> scores;
  if (cfg.aggregation_strategy == AggregationStrategy::ScoreDW)
    scores = read_scores(paths.scores);

  std::vector<AggregatedQuery> agg(d.queries.size());
  parallel_for(d.queries.size(), cfg.parallelism, [&](std::size_t i) {
    const Query& q = d.queries[i];
    const auto& set = require_row(clusters, q.id, "clusters.jsonl");
    std::optional<ScoreList> s;
    if (cfg.aggregation_strategy == AggregationStrategy::ScoreDW)
      s = require_row(scores, q.id, "scores.jsonl");
    Embedding e_init = embed_cached(q.text, emb, cp);
    agg[i] = aggregate_for_query(q, e_init, set, s, cfg, emb, cp);
  });

  std::vector<nlohmann::ordered_json> bundle_rows, agg_rows;
  for (std::size_t i = 0; i < d.queries.size(); ++i) {
    nlohmann::ordered_json brow;
    brow["qid"] = d.queries[i].id;
    brow["bundle"] = agg[i].bundle.to_json();
    bundle_rows.push_back(std::move(brow));
    nlohmann::ordered_json arow;
    arow["qid"] = d.queries[i].id;
    arow["strategy"] = to_string(agg[i].strategy);
    if (agg[i].embedding.has_value()) arow["embedding"] = *agg[i].embedding;
    if (agg[i].text.has_value()) arow["text"] = *agg[i].text;
    agg_rows.push_back(std::move(arow));
    if (o.explain) print_explain(agg[i].bundle, d.queries[i].id);
  }
  write_jsonl(paths.bundles, bundle_rows);
  write_jsonl(paths.aggregated, agg_rows);
  std::cerr << "wrote " << agg_rows.size() << " aggregated queries to "
            << paths.aggregated.string() << "\n";
}

void cmd_retrieve(const CommonOpts& o) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, true, false);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  DocIndex index = build_index(o, d, emb, cp, cfg.parallelism);
  RunPaths paths = make_run_paths(o.out_dir);
  auto agg = read_aggregated(paths.aggregated);
  std::string tag =
      o.tag.empty() ? "qreform-" + std::string(to_string(
                          cfg.aggregation_strategy))
                    : o.tag;

  std::vector<std::vector<SearchResult>> results(d.queries.size());
  parallel_for(d.queries.size(), cfg.parallelism, [&](std::size_t i) {
    const auto& row = require_row(agg, d.queries[i].id, "aggregated.jsonl");
    if (row.embedding.has_value())
      results[i] = index.search(*row.embedding, cfg.top_k, cfg.score_fn);
    else
      results[i] = index.search(embed_cached(*row.text, emb, cp), cfg.top_k,
                                cfg.score_fn);
  });
  std::vector<TrecRunLine> lines;
  for (std::size_t i = 0; i < d.queries.size(); ++i)
    for (const auto& r : results[i])
      lines.push_back({d.queries[i].id, r.doc_id, r.rank, r.score, tag});
  write_trec_run(paths.run, lines);
  std::cerr << "wrote " << lines.size() << " run lines to "
            << paths.run.string() << "\n";
}

void cmd_evaluate(const std::string& qrels_path,
                  const std::vector<std::string>& run_files, int k,
                  const std::string& gain_name) {
  NdcgGain gain = NdcgGain::Linear;
  if (gain_name == "exponential") gain = NdcgGain::Exponential;
  else if (gain_name != "linear")
    throw ConfigError("--gain must be linear or exponential");
  Qrels qrels = load_qrels(qrels_path);

  std::vector<MetricReport> reports;
  for (const auto& f : run_files) {
    auto lines = load_trec_run(f);
    std::string tag = lines.front().tag.empty() ? f : lines.front().tag;
    reports.push_back(evaluate_run(group_run(lines), qrels, k, gain, tag));
  }
  nlohmann::ordered_json out;
  out["reports"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) out["reports"].push_back(r.to_json());
  if (reports.size() > 1) {
    std::vector<MetricReport> candidates(reports.begin() + 1, reports.end());
    auto comparisons = compare_runs(reports.front(), candidates);
    auto arr = nlohmann::ordered_json::array();
    for (const auto& c : comparisons) {
      nlohmann::ordered_json row;
      row["tag"] = c.tag;
      row["baseline_mean"] = c.baseline_mean;
      row["mean"] = c.mean;
      row["n"] = c.test.n;
      row["mean_diff"] = c.test.mean_diff;
      row["degenerate"] = c.test.degenerate;
      if (c.test.t.has_value()) row["t"] = *c.test.t;
      if (c.test.p.has_value()) row["p"] = *c.test.p;
      if (c.p_adjusted.has_value()) row["p_holm"] = *c.p_adjusted;
      arr.push_back(std::move(row));
    }
    out["comparisons"] = std::move(arr);
  }
  std::cout << out.dump(2) << "\n";
}

void cmd_run(const CommonOpts& o, bool require_qerm) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, true, false);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  DocIndex index = build_index(o, d, emb, cp, cfg.parallelism);

  std::optional<QermModel> model;
  if (!o.qerm_model_path.empty()) model = load_model(o.qerm_model_path);
  if (require_qerm && !model.has_value())
    throw ConfigError("this command needs --qerm MODEL");

  auto result = run_pipeline(cfg, d.queries, index,
                             d.qrels ? &*d.qrels : nullptr, *gen, emb, cp,
                             model ? &*model : nullptr, o.out_dir, o.eval_k,
                             o.tag);
  if (o.explain)
    for (const auto& rec : result.summary.records)
      print_explain(rec.aggregated.bundle, rec.query.id);
  std::cerr << "run complete: " << result.summary.records.size()
            << " queries, artifacts in " << o.out_dir << "\n";
  if (result.summary.qerm.has_value()) {
    const auto& q = *result.summary.qerm;
    std::cerr << "feedback loop: epsilon=" << q.epsilon << " accepted="
              << q.accepted << " returned_best=" << q.returned_best
              << " regenerations=" << q.regenerations << "\n";
  }
  if (result.summary.metrics.has_value())
    std::cout << result.summary.metrics->to_json().dump(2) << "\n";
}

void cmd_ablate(const CommonOpts& o, const std::string& sweep) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, true, true);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  DocIndex index = build_index(o, d, emb, cp, cfg.parallelism);

  auto rows = run_ablation(sweep, cfg, d.queries, index, *d.qrels, *gen, emb,
                           cp, o.eval_k);
  std::filesystem::path out =
      std::filesystem::path(o.out_dir) / ("ablation_" + sweep + ".json");
  std::filesystem::create_directories(o.out_dir);
  atomic_write_file(out, ablation_to_json(rows).dump(2) + "\n");
  std::printf("%-16s %-8s %12s %6s\n", "sweep", "value", "mean_ndcg", "runs");
  for (const auto& r : rows)
    std::printf("%-16s %-8s %12.6f %6zu\n", r.sweep.c_str(), r.label.c_str(),
                r.mean_ndcg, r.runs);
  std::cerr << "wrote " << out.string() << "\n";
}

void cmd_qerm_build_dataset(const CommonOpts& o, const std::string& out_path) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, true, true);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  DocIndex index = build_index(o, d, emb, cp, cfg.parallelism);

  RunSummary summary = run_in_memory(cfg, d.queries, index, &*d.qrels, *gen,
                                     emb, cp, nullptr, o.eval_k);
  auto built = build_training_set(summary, cfg, emb, cp);
  write_examples_jsonl(out_path, built.examples);
  std::cerr << "wrote " << built.examples.size() << " examples to "
            << out_path << "\n";
  for (const auto& [qid, reason] : built.skipped)
    std::cerr << "skipped " << qid << ": " << reason << "\n";
}

void cmd_qerm_train(const std::string& examples_path,
                    const std::string& model_path, int epochs, double lr) {
  auto examples = load_examples_jsonl(examples_path);
  std::size_t feature_dim = examples.front().features.size();
  if (feature_dim < 5 || (feature_dim - 2) % 3 != 0)
    throw ConfigError("feature count " + std::to_string(feature_dim) +
                      " does not fit the 3d+2 layout");
  int emb_dim = static_cast<int>((feature_dim - 2) / 3);
  TrainOptions opts;
  opts.epochs = epochs;
  opts.lr = lr;
  auto [model, report] = train_reward_model(examples, emb_dim, opts);
  save_model(model_path, model);
  std::cerr << "trained on " << examples.size() << " examples, final loss "
            << report.loss_trace.back()
            << (report.degenerate ? " (single-class, prior-only model)" : "")
            << "\n";
  std::cerr << "wrote " << model_path << "\n";
}

void cmd_cluster_stats(const CommonOpts& o) {
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  RunPaths paths = make_run_paths(o.out_dir);
  auto by_qid = read_clusters(paths.clusters);
  std::vector<ClusterSet> sets;
  for (const auto& [qid, set] : by_qid) {
    (void)qid;
    sets.push_back(set);
  }
  auto stats = compute_cluster_stats(sets, emb, cp);
  std::cout << stats.to_json().dump(2) << "\n";
}

void cmd_export_finetune(const CommonOpts& o, const std::string& out_path) {
  PipelineConfig cfg = make_config(o);
  Dataset d = load_dataset(o, true, false);
  auto gen = make_gen_provider(o);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  DocIndex index = build_index(o, d, emb, cp, cfg.parallelism);

  std::optional<QermModel> model;
  if (!o.qerm_model_path.empty()) model = load_model(o.qerm_model_path);
  RunSummary summary = run_in_memory(cfg, d.queries, index,
                                     d.qrels ? &*d.qrels : nullptr, *gen, emb,
                                     cp, model ? &*model : nullptr, o.eval_k);
  auto report = export_finetune_pairs(out_path, summary, cfg, *gen, cp);
  std::cerr << "wrote " << report.written << " pairs to " << out_path
            << " (skipped " << report.skipped << ")\n";
}

void cmd_embed_corpus(const CommonOpts& o, const std::string& out_path) {
  Dataset d = load_dataset(o, true, false);
  auto cache = make_cache(o);
  const FileCache* cp = cache ? &*cache : nullptr;
  HashEmbeddingProvider emb(o.emb_dim, o.seed);
  std::vector<Embedding> vecs(d.corpus.size());
  int par = o.parallelism.value_or(1);
  parallel_for(d.corpus.size(), par, [&](std::size_t i) {
    vecs[i] = embed_cached(doc_embedding_text(d.corpus[i]), emb, cp);
  });
  std::vector<nlohmann::ordered_json> rows;
  for (std::size_t i = 0; i < d.corpus.size(); ++i) {
    nlohmann::ordered_json row;
    row["id"] = d.corpus[i].id;
    row["vector"] = vecs[i];
    rows.push_back(std::move(row));
  }
  write_jsonl(out_path, rows);
  std::cerr << "wrote " << rows.size() << " embeddings to " << out_path
            << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"query reformulation pipeline"};
  app.require_subcommand(1);
  CommonOpts o;

  auto* c_generate =
      app.add_subcommand("generate", "expand queries through the prompt set");
  add_dataset_flags(c_generate, o);
  add_config_flags(c_generate, o);
  add_provider_flags(c_generate, o);
  c_generate->callback([&] { cmd_generate(o); });

  auto* c_cluster = app.add_subcommand(
      "cluster", "condense generated queries into intent clusters");
  add_dataset_flags(c_cluster, o);
  add_config_flags(c_cluster, o);
  add_provider_flags(c_cluster, o);
  c_cluster->callback([&] { cmd_cluster(o); });

  auto* c_score =
      app.add_subcommand("score", "judge cluster queries on the 1-100 scale");
  add_dataset_flags(c_score, o);
  add_config_flags(c_score, o);
  add_provider_flags(c_score, o);
  c_score->callback([&] { cmd_score(o); });

  auto* c_aggregate = app.add_subcommand(
      "aggregate", "combine initial and cluster queries per strategy");
  add_dataset_flags(c_aggregate, o);
  add_config_flags(c_aggregate, o);
  add_provider_flags(c_aggregate, o);
  c_aggregate->add_flag("--explain", o.explain,
                        "print per-candidate weight tables");
  c_aggregate->callback([&] { cmd_aggregate(o); });

  auto* c_retrieve =
      app.add_subcommand("retrieve", "run aggregated queries over the corpus");
  add_dataset_flags(c_retrieve, o);
  add_config_flags(c_retrieve, o);
  add_provider_flags(c_retrieve, o);
  c_retrieve->add_option("--tag", o.tag, "run tag for TREC output");
  c_retrieve->callback([&] { cmd_retrieve(o); });

  std::vector<std::string> eval_runs;
  std::string eval_qrels, eval_gain = "linear";
  int eval_k = 10;
  auto* c_evaluate =
      app.add_subcommand("evaluate", "score runs against relevance judgments");
  c_evaluate->add_option("--qrels", eval_qrels, "qrels file")->required();
  c_evaluate->add_option("--k", eval_k, "metric depth");
  c_evaluate->add_option("--gain", eval_gain, "gain: linear or exponential");
  c_evaluate
      ->add_option("runs", eval_runs,
                   "TREC run files; the first is the baseline")
      ->required();
  c_evaluate->callback(
      [&] { cmd_evaluate(eval_qrels, eval_runs, eval_k, eval_gain); });

  auto* c_run = app.add_subcommand("run", "whole pipeline in one pass");
  add_dataset_flags(c_run, o);
  add_config_flags(c_run, o);
  add_provider_flags(c_run, o);
  c_run->add_option("--qerm", o.qerm_model_path,
                    "reward model file; enables the feedback loop");
  c_run->add_option("--tag", o.tag, "run tag");
  c_run->add_option("--k", o.eval_k, "metric depth");
  c_run->add_flag("--explain", o.explain, "print per-candidate weight tables");
  c_run->callback([&] { cmd_run(o, false); });

  std::string ablate_sweep;
  auto* c_ablate =
      app.add_subcommand("ablate", "sweep one parameter over full runs");
  add_dataset_flags(c_ablate, o);
  add_config_flags(c_ablate, o);
  add_provider_flags(c_ablate, o);
  c_ablate
      ->add_option("--sweep", ablate_sweep,
                   "w0, prompts, sim_threshold, score_threshold")
      ->required();
  c_ablate->add_option("--k", o.eval_k, "metric depth");
  c_ablate->callback([&] { cmd_ablate(o, ablate_sweep); });

  auto* c_qerm =
      app.add_subcommand("qerm", "reward-model dataset, training, loop");
  c_qerm->require_subcommand(1);

  std::string ds_out = "examples.jsonl";
  auto* c_build = c_qerm->add_subcommand(
      "build-dataset", "label a run for reward-model training");
  add_dataset_flags(c_build, o);
  add_config_flags(c_build, o);
  add_provider_flags(c_build, o);
  c_build->add_option("--out", ds_out, "examples JSONL path");
  c_build->add_option("--k", o.eval_k, "metric depth");
  c_build->callback([&] { cmd_qerm_build_dataset(o, ds_out); });

  std::string train_examples, train_model = "qerm_model.json";
  int train_epochs = 500;
  double train_lr = 0.1;
  auto* c_train =
      c_qerm->add_subcommand("train", "fit the logistic reward model");
  c_train->add_option("--examples", train_examples, "examples JSONL")
      ->required();
  c_train->add_option("--out", train_model, "model output path");
  c_train->add_option("--epochs", train_epochs, "training epochs");
  c_train->add_option("--lr", train_lr, "learning rate");
  c_train->callback(
      [&] { cmd_qerm_train(train_examples, train_model, train_epochs, train_lr); });

  auto* c_loop = c_qerm->add_subcommand(
      "loop", "full pipeline with the reward-model feedback loop");
  add_dataset_flags(c_loop, o);
  add_config_flags(c_loop, o);
  add_provider_flags(c_loop, o);
  c_loop->add_option("--qerm", o.qerm_model_path, "reward model file")
      ->required();
  c_loop->add_option("--tag", o.tag, "run tag");
  c_loop->add_option("--k", o.eval_k, "metric depth");
  c_loop->add_flag("--explain", o.explain, "print per-candidate weight tables");
  c_loop->callback([&] { cmd_run(o, true); });

  std::string ft_out = "finetune.jsonl";
  auto* c_finetune = app.add_subcommand(
      "export-finetune", "emit (query, best cluster query) training pairs");
  add_dataset_flags(c_finetune, o);
  add_config_flags(c_finetune, o);
  add_provider_flags(c_finetune, o);
  c_finetune->add_option("--qerm", o.qerm_model_path,
                         "optional reward model for loop-refined clusters");
  c_finetune->add_option("--out", ft_out, "pairs JSONL path");
  c_finetune->callback([&] { cmd_export_finetune(o, ft_out); });

  auto* c_stats = app.add_subcommand(
      "cluster-stats", "size histogram and intra-set similarity of clusters");
  c_stats->add_option("--out-dir", o.out_dir, "artifact directory");
  add_provider_flags(c_stats, o);
  c_stats->callback([&] { cmd_cluster_stats(o); });

  std::string embed_out = "embeddings.jsonl";
  auto* c_embed = app.add_subcommand(
      "embed-corpus", "precompute corpus embeddings to JSONL");
  add_dataset_flags(c_embed, o);
  add_provider_flags(c_embed, o);
  c_embed->add_option("--out", embed_out, "embeddings JSONL path");
  c_embed->add_option("--parallelism", o.parallelism, "worker threads");
  c_embed->callback([&] { cmd_embed_corpus(o, embed_out); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const qreform::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
