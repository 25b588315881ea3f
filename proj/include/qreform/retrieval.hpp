#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qreform/cache.hpp"
#include "qreform/config.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/io.hpp"
#include "qreform/types.hpp"

namespace qreform {

struct CorpusDoc {
  std::string id;
  std::string title;
  std::string text;
};

/// `{"_id": ..., "title": ..., "text": ...}` lines; title and text may be
/// absent, ids must be unique.
inline std::vector<CorpusDoc> load_corpus_jsonl(
    const std::filesystem::path& path) {
  std::vector<CorpusDoc> docs;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("_id") || !doc["_id"].is_string())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": corpus line needs a string '_id'");
    CorpusDoc d;
    d.id = doc["_id"].get<std::string>();
    if (!seen.insert(d.id).second)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": duplicate corpus id '" + d.id + "'");
    if (doc.contains("title") && doc["title"].is_string())
      d.title = doc["title"].get<std::string>();
    if (doc.contains("text") && doc["text"].is_string())
      d.text = doc["text"].get<std::string>();
    docs.push_back(std::move(d));
  });
  if (docs.empty()) throw ParseError("no documents in " + path.string());
  return docs;
}

inline std::string doc_embedding_text(const CorpusDoc& d) {
  if (d.title.empty()) return d.text;
  if (d.text.empty()) return d.title;
  return d.title + " " + d.text;
}

inline std::vector<Query> load_queries_jsonl(
    const std::filesystem::path& path) {
  std::vector<Query> queries;
  std::unordered_set<std::string> seen;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("_id") || !doc["_id"].is_string() ||
        !doc.contains("text") || !doc["text"].is_string())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": query line needs string '_id' and 'text'");
    Query q = make_query(doc["_id"].get<std::string>(),
                         doc["text"].get<std::string>());
    if (!seen.insert(q.id).second)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": duplicate query id '" + q.id + "'");
    queries.push_back(std::move(q));
  });
  if (queries.empty()) throw ParseError("no queries in " + path.string());
  return queries;
}

struct SearchResult {
  std::string doc_id;
  double score = 0.0;
  int rank = 0;  // 1-based
};

/// Flat, exact dense index: one row per document, brute-force scoring.
class DocIndex {
 public:
  static DocIndex build(
      const std::vector<std::pair<std::string, Embedding>>& entries) {
    if (entries.empty()) throw ConfigError("cannot index an empty corpus");
    DocIndex idx;
    idx.dim_ = static_cast<int>(entries.front().second.size());
    if (idx.dim_ < 1) throw DimensionError("document embeddings are empty");
    std::unordered_set<std::string> seen;
    idx.data_.reserve(entries.size() * static_cast<std::size_t>(idx.dim_));
    for (const auto& [id, vec] : entries) {
      if (!seen.insert(id).second)
        throw ConfigError("duplicate document id '" + id + "' in index");
      if (static_cast<int>(vec.size()) != idx.dim_)
        throw DimensionError("document '" + id + "' has dim " +
                             std::to_string(vec.size()) + ", index dim is " +
                             std::to_string(idx.dim_));
      double n = l2_norm(vec);
      if (n == 0.0)
        throw DimensionError("document '" + id +
                             "' has a zero-magnitude embedding");
      idx.ids_.push_back(id);
      idx.norms_.push_back(n);
      idx.data_.insert(idx.data_.end(), vec.begin(), vec.end());
    }
    return idx;
  }

  int dim() const { return dim_; }
  std::size_t size() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  /// Exact scan. Results sorted by score descending, then doc id ascending
  /// so equal scores rank deterministically; k is clipped to the corpus.
  std::vector<SearchResult> search(const Embedding& query, int k,
                                   ScoreFn fn = ScoreFn::Cosine) const {
    if (k < 1) throw ConfigError("k must be >= 1, got " + std::to_string(k));
    if (static_cast<int>(query.size()) != dim_)
      throw DimensionError("query dim " + std::to_string(query.size()) +
                           " does not match index dim " +
                           std::to_string(dim_));
    double qnorm = l2_norm(query);
    if (fn == ScoreFn::Cosine && qnorm == 0.0)
      throw DimensionError("zero-magnitude query embedding");

    std::vector<SearchResult> all;
    all.reserve(ids_.size());
    for (std::size_t row = 0; row < ids_.size(); ++row) {
      const double* base = data_.data() + row * static_cast<std::size_t>(dim_);
      double s = 0.0;
      for (int d = 0; d < dim_; ++d)
        s += base[d] * query[static_cast<std::size_t>(d)];
      if (fn == ScoreFn::Cosine)
        s = std::clamp(s / (norms_[row] * qnorm), -1.0, 1.0);
      all.push_back({ids_[row], s, 0});
    }
    std::sort(all.begin(), all.end(),
              [](const SearchResult& a, const SearchResult& b) {
                if (a.score != b.score) return a.score > b.score;
                return a.doc_id < b.doc_id;
              });
    if (static_cast<std::size_t>(k) < all.size())
      all.resize(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < all.size(); ++i)
      all[i].rank = static_cast<int>(i) + 1;
    return all;
  }

 private:
  std::vector<std::string> ids_;
  std::vector<double> norms_;
  std::vector<double> data_;
  int dim_ = 0;
};

/// Embeds every document through the provider (cache-aware, optionally
/// parallel) and builds the index in corpus order.
inline DocIndex index_corpus(const std::vector<CorpusDoc>& docs,
                             EmbeddingProvider& provider,
                             const FileCache* cache = nullptr,
                             int parallelism = 1) {
  std::vector<std::pair<std::string, Embedding>> entries(docs.size());
  parallel_for(docs.size(), parallelism, [&](std::size_t i) {
    entries[i] = {docs[i].id,
                  embed_cached(doc_embedding_text(docs[i]), provider, cache)};
  });
  return DocIndex::build(entries);
}

struct PrecomputedIngestReport {
  DocIndex index;
  std::size_t missing = 0;  // docs with no embedding row, skipped
};

/// Joins a corpus with a precomputed embedding table by document id. Docs
/// without a row are skipped and counted; an empty intersection is an error.
inline PrecomputedIngestReport index_corpus_precomputed(
    const std::vector<CorpusDoc>& docs,
    const std::vector<std::pair<std::string, Embedding>>& embeddings) {
  std::unordered_map<std::string, const Embedding*> table;
  for (const auto& [id, vec] : embeddings) table[id] = &vec;
  std::vector<std::pair<std::string, Embedding>> entries;
  std::size_t missing = 0;
  for (const auto& d : docs) {
    auto it = table.find(d.id);
    if (it == table.end()) {
      ++missing;
      continue;
    }
    entries.emplace_back(d.id, *it->second);
  }
  if (entries.empty())
    throw ConfigError("no corpus document has a precomputed embedding");
  return {DocIndex::build(entries), missing};
}

// ---------------------------------------------------------------------------
// TREC run files

struct TrecRunLine {
  std::string qid;
  std::string docid;
  int rank = 0;
  double score = 0.0;
  std::string tag;
};

inline std::string format_score(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

/// "qid Q0 docid rank score tag", one line per result.
inline void write_trec_run(const std::filesystem::path& path,
                           const std::vector<TrecRunLine>& lines) {
  std::string out;
  for (const auto& l : lines) {
    out += l.qid;
    out += " Q0 ";
    out += l.docid;
    out += ' ';
    out += std::to_string(l.rank);
    out += ' ';
    out += format_score(l.score);
    out += ' ';
    out += l.tag;
    out += '\n';
  }
  atomic_write_file(path, out);
}

inline std::vector<TrecRunLine> load_trec_run(
    const std::filesystem::path& path) {
  std::vector<TrecRunLine> lines;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream row(line);
    TrecRunLine l;
    std::string q0;
    if (!(row >> l.qid >> q0 >> l.docid >> l.rank >> l.score >> l.tag))
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": malformed run line '" + line + "'");
    lines.push_back(std::move(l));
  }
  if (lines.empty()) throw ParseError("no run lines in " + path.string());
  return lines;
}

/// qid -> results ordered by rank.
inline std::map<std::string, std::vector<TrecRunLine>> group_run(
    const std::vector<TrecRunLine>& lines) {
  std::map<std::string, std::vector<TrecRunLine>> grouped;
  for (const auto& l : lines) grouped[l.qid].push_back(l);
  for (auto& [qid, rows] : grouped)
    std::sort(rows.begin(), rows.end(),
              [](const TrecRunLine& a, const TrecRunLine& b) {
                return a.rank < b.rank;
              });
  return grouped;
}

}  // namespace qreform
