#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "qreform/cache.hpp"
#include "qreform/errors.hpp"
#include "qreform/hash.hpp"
#include "qreform/io.hpp"

namespace qreform {

using Embedding = std::vector<double>;

inline void require_same_dim(const Embedding& a, const Embedding& b,
                             const char* where) {
  if (a.size() != b.size())
    throw DimensionError(std::string(where) + ": dimension mismatch, " +
                         std::to_string(a.size()) + " vs " +
                         std::to_string(b.size()));
}

inline double dot(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l2_norm(const Embedding& a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s);
}

/// Cosine similarity, clamped into [-1, 1] so downstream thresholds never
/// see values pushed out of range by floating-point noise.
inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  require_same_dim(a, b, "cosine_similarity");
  if (a.empty()) throw DimensionError("cosine_similarity: empty vectors");
  double na = l2_norm(a);
  double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0)
    throw DimensionError("cosine_similarity: zero-magnitude vector");
  return std::clamp(dot(a, b) / (na * nb), -1.0, 1.0);
}

inline Embedding l2_normalize(Embedding a) {
  double n = l2_norm(a);
  if (n == 0.0) throw DimensionError("l2_normalize: zero-magnitude vector");
  for (double& v : a) v /= n;
  return a;
}

inline Embedding mean_embedding(const std::vector<Embedding>& vs) {
  if (vs.empty()) throw DimensionError("mean_embedding: no vectors");
  Embedding acc(vs[0].size(), 0.0);
  for (const auto& v : vs) {
    require_same_dim(acc, v, "mean_embedding");
    for (std::size_t i = 0; i < v.size(); ++i) acc[i] += v[i];
  }
  for (double& x : acc) x /= static_cast<double>(vs.size());
  return acc;
}

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual Embedding embed(const std::string& text) = 0;
};

namespace detail {

/// Uniform in (0, 1], then Box-Muller. Hand-rolled on purpose:
/// std::normal_distribution's output sequence is implementation-defined,
/// and these vectors must be a pure function of (text, seed).
inline double unit_open(std::uint64_t& state) {
  return (static_cast<double>(splitmix64(state) >> 11) + 1.0) * 0x1.0p-53;
}

inline double gaussian(std::uint64_t& state) {
  double u1 = unit_open(state);
  double u2 = unit_open(state);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.141592653589793238462643 * u2);
}

inline std::vector<std::string> lower_alnum_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    unsigned char u = static_cast<unsigned char>(ch);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

}  // namespace detail

/// Token-hash embedder: each token seeds a gaussian vector, token vectors
/// sum, the sum is L2-normalized. Texts sharing tokens land near each other,
/// which is all the offline pipeline needs from semantic space.
class HashEmbeddingProvider : public EmbeddingProvider {
 public:
  explicit HashEmbeddingProvider(int dim = 64, std::uint64_t seed = 0)
      : dim_(dim), seed_(seed) {
    if (dim < 1) throw ConfigError("embedding dim must be >= 1");
  }

  std::string id() const override {
    return "hash-d" + std::to_string(dim_) + "-s" + std::to_string(seed_);
  }

  int dim() const override { return dim_; }

  Embedding embed(const std::string& text) override {
    auto tokens = detail::lower_alnum_tokens(text);
    if (tokens.empty()) tokens.push_back(text);
    Embedding acc(static_cast<std::size_t>(dim_), 0.0);
    for (const auto& tok : tokens) {
      std::uint64_t state =
          fnv1a64(tok) ^ (seed_ * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL);
      for (int i = 0; i < dim_; ++i) acc[static_cast<std::size_t>(i)] +=
          detail::gaussian(state);
    }
    double n = l2_norm(acc);
    if (n == 0.0) {
      acc[0] = 1.0;
      return acc;
    }
    for (double& v : acc) v /= n;
    return acc;
  }

 private:
  int dim_;
  std::uint64_t seed_;
};

/// Serves embeddings from an in-memory table keyed by exact text (or id).
class PrecomputedEmbeddingProvider : public EmbeddingProvider {
 public:
  PrecomputedEmbeddingProvider(
      std::unordered_map<std::string, Embedding> table, std::string tag)
      : table_(std::move(table)), tag_(std::move(tag)) {
    if (table_.empty())
      throw ConfigError("precomputed embedding table is empty");
    dim_ = static_cast<int>(table_.begin()->second.size());
    for (const auto& [key, vec] : table_) {
      if (static_cast<int>(vec.size()) != dim_)
        throw DimensionError("precomputed embedding for '" + key + "' has dim " +
                             std::to_string(vec.size()) + ", expected " +
                             std::to_string(dim_));
    }
  }

  std::string id() const override { return "precomputed-" + tag_; }
  int dim() const override { return dim_; }

  Embedding embed(const std::string& text) override {
    auto it = table_.find(text);
    if (it == table_.end())
      throw ProviderError("no precomputed embedding for '" + text + "'");
    return it->second;
  }

 private:
  std::unordered_map<std::string, Embedding> table_;
  std::string tag_;
  int dim_ = 0;
};

/// Reads `{"id": ..., "vector": [...]}` lines; order preserved, duplicate
/// ids and ragged dimensions rejected.
inline std::vector<std::pair<std::string, Embedding>> load_embeddings_jsonl(
    const std::filesystem::path& path) {
  std::vector<std::pair<std::string, Embedding>> out;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_jsonl(path, [&](std::size_t lineno, const nlohmann::json& doc) {
    if (!doc.contains("id") || !doc["id"].is_string() ||
        !doc.contains("vector") || !doc["vector"].is_array())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": embedding line needs string 'id' and array 'vector'");
    std::string id = doc["id"].get<std::string>();
    if (!seen.emplace(id, lineno).second)
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": duplicate embedding id '" + id + "'");
    Embedding vec;
    for (const auto& v : doc["vector"]) {
      if (!v.is_number())
        throw ParseError(path.string() + ":" + std::to_string(lineno) +
                         ": vector holds a non-numeric element");
      vec.push_back(v.get<double>());
    }
    if (!out.empty() && vec.size() != out.front().second.size())
      throw DimensionError(path.string() + ":" + std::to_string(lineno) +
                           ": dim " + std::to_string(vec.size()) +
                           " differs from first line's " +
                           std::to_string(out.front().second.size()));
    out.emplace_back(std::move(id), std::move(vec));
  });
  if (out.empty()) throw ParseError("no embeddings in " + path.string());
  return out;
}

/// Cache-aware embed. Values round-trip through JSON losslessly (shortest
/// round-trip formatting), so a warm read is bit-identical to a fresh one.
inline Embedding embed_cached(const std::string& text,
                              EmbeddingProvider& provider,
                              const FileCache* cache = nullptr) {
  if (cache == nullptr) return provider.embed(text);
  nlohmann::json key_doc = {{"text", text}, {"provider", provider.id()}};
  const std::string key = content_key(key_doc.dump());
  if (auto raw = cache->get(key)) {
    auto doc = nlohmann::json::parse(*raw, nullptr, false);
    if (doc.is_object() && doc.contains("vector") && doc["vector"].is_array() &&
        static_cast<int>(doc["vector"].size()) == provider.dim()) {
      Embedding vec;
      for (const auto& v : doc["vector"]) vec.push_back(v.get<double>());
      return vec;
    }
  }
  Embedding vec = provider.embed(text);
  nlohmann::json payload = {{"vector", vec}};
  cache->put(key, payload.dump());
  return vec;
}

}  // namespace qreform
