#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qreform/cache.hpp"
#include "qreform/errors.hpp"
#include "qreform/hash.hpp"
#include "qreform/io.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// One generation call. `variant` partitions otherwise-identical requests:
/// the feedback loop stamps the iteration (and parse-retry ordinal) here so
/// that regeneration gets fresh sampling and its own cache slot.
struct GenerationRequest {
  std::string prompt;
  SamplingParams sampling;
  int n_samples = 1;
  std::string variant;
};

struct GenerationResponse {
  std::vector<std::string> completions;
  std::string provider;
  bool cache_hit = false;
};

class GenerationProvider {
 public:
  virtual ~GenerationProvider() = default;
  virtual std::string id() const = 0;
  virtual std::vector<std::string> complete(const GenerationRequest& req) = 0;
};

/// Cache key covers every component that could change the completion.
inline std::string generation_cache_key(const GenerationRequest& req,
                                        const std::string& provider_id) {
  nlohmann::json doc = {{"prompt", req.prompt},
                        {"temperature", req.sampling.temperature},
                        {"top_p", req.sampling.top_p},
                        {"n", req.n_samples},
                        {"variant", req.variant},
                        {"provider", provider_id}};
  return content_key(doc.dump());
}

/// Runs one generation request through the cache. A warm cache returns the
/// stored completions byte-identically with cache_hit=true; a provider that
/// returns the wrong completion count is a contract violation.
inline GenerationResponse generate(const GenerationRequest& req,
                                   GenerationProvider& provider,
                                   const FileCache* cache = nullptr,
                                   bool bypass_cache_read = false) {
  if (req.n_samples < 1)
    throw ConfigError("n_samples must be >= 1, got " +
                      std::to_string(req.n_samples));
  const std::string key = generation_cache_key(req, provider.id());

  if (cache != nullptr && !bypass_cache_read) {
    if (auto raw = cache->get(key)) {
      auto doc = nlohmann::json::parse(*raw, nullptr, false);
      if (doc.is_object() && doc.contains("completions") &&
          doc["completions"].is_array() &&
          static_cast<int>(doc["completions"].size()) == req.n_samples) {
        GenerationResponse resp;
        for (const auto& c : doc["completions"])
          resp.completions.push_back(c.get<std::string>());
        resp.provider = provider.id();
        resp.cache_hit = true;
        return resp;
      }
      // Unreadable cache entry: fall through and refresh it.
    }
  }

  std::vector<std::string> completions = provider.complete(req);
  if (static_cast<int>(completions.size()) != req.n_samples)
    throw ProviderError("provider '" + provider.id() + "' returned " +
                        std::to_string(completions.size()) +
                        " completions, " + std::to_string(req.n_samples) +
                        " requested");
  if (cache != nullptr) {
    nlohmann::json payload = {{"completions", completions}};
    cache->put(key, payload.dump());
  }
  GenerationResponse resp;
  resp.completions = std::move(completions);
  resp.provider = provider.id();
  resp.cache_hit = false;
  return resp;
}

// ---------------------------------------------------------------------------
// Deterministic templated mock

namespace detail {

inline std::string extract_between(std::string_view text,
                                   std::string_view after,
                                   std::string_view until) {
  auto pos = text.find(after);
  if (pos == std::string_view::npos) return "";
  pos += after.size();
  auto end = until.empty() ? std::string_view::npos : text.find(until, pos);
  auto slice =
      end == std::string_view::npos ? text.substr(pos) : text.substr(pos, end - pos);
  return trim(slice);
}

inline std::string hex_tag(std::uint64_t h) { return to_hex(h).substr(0, 6); }

}  // namespace detail

/// Pure function of (prompt, variant, n_samples, seed): recognizes the
/// pipeline's prompt kinds by their opening sentence and emits parseable
/// cluster JSON, score lists, or tagged reformulations. Stable across runs
/// and platforms, so a whole offline pipeline run is reproducible from the
/// seed alone.
class MockGenerationProvider : public GenerationProvider {
 public:
  explicit MockGenerationProvider(std::uint64_t seed = 0) : seed_(seed) {}

  std::string id() const override {
    return "mock-" + std::to_string(seed_);
  }

  std::vector<std::string> complete(const GenerationRequest& req) override {
    std::uint64_t state = fnv1a64(req.prompt);
    state = fnv1a64(req.variant, state) ^ (seed_ * 0x9e3779b97f4a7c15ULL);

    std::vector<std::string> out;
    out.reserve(static_cast<std::size_t>(req.n_samples));
    for (int i = 0; i < req.n_samples; ++i) {
      std::uint64_t s = state + static_cast<std::uint64_t>(i) * 0x100000001b3ULL;
      out.push_back(render_completion(req.prompt, s));
    }
    return out;
  }

 private:
  std::string render_completion(std::string_view prompt,
                                std::uint64_t state) const {
    if (prompt.rfind("You are an expert in clustering and query refinement",
                     0) == 0)
      return cluster_completion(prompt, state);
    if (prompt.rfind("You are an expert in scoring cluster queries", 0) == 0)
      return score_completion(prompt, state);
    return reformulation_completion(prompt, state);
  }

  std::string cluster_completion(std::string_view prompt,
                                 std::uint64_t state) const {
    std::string query = detail::extract_between(prompt, "Below is the query: ",
                                                "\nGenerated queries:");
    int count = 1 + static_cast<int>(splitmix64(state) % 3);
    nlohmann::ordered_json obj;
    for (int i = 0; i < count; ++i) {
      obj["cluster" + std::to_string(i + 1)] =
          query + " intent " + std::to_string(i + 1) + " " +
          detail::hex_tag(splitmix64(state));
    }
    return "Here are the clusters: " + obj.dump();
  }

  std::string score_completion(std::string_view prompt,
                               std::uint64_t state) const {
    std::string clusters = detail::extract_between(
        prompt, "Cluster-Generated Queries : ", "");
    auto arr = nlohmann::json::parse(clusters, nullptr, false);
    std::size_t count = arr.is_array() ? arr.size() : 1;
    std::string out = "[";
    for (std::size_t i = 0; i < count; ++i) {
      if (i > 0) out += ", ";
      out += std::to_string(1 + splitmix64(state) % 100);
    }
    return out + "]";
  }

  std::string reformulation_completion(std::string_view prompt,
                                       std::uint64_t state) const {
    std::string query =
        detail::extract_between(prompt, "Below is the query: ", "");
    std::string tag = "general";
    if (prompt.rfind("You are a contextual expansion expert", 0) == 0)
      tag = "context";
    else if (prompt.rfind("You are a detail-specific expert", 0) == 0)
      tag = "detail";
    else if (prompt.rfind("You are an aspect-specific inquiry expert", 0) == 0)
      tag = "aspect";
    else if (prompt.rfind("You are a clarity-enhancement expert", 0) == 0)
      tag = "clarity";
    return query + " " + tag + " angle " + detail::hex_tag(splitmix64(state));
  }

  std::uint64_t seed_;
};

// ---------------------------------------------------------------------------
// Replay fixtures

/// Replays canned completions from a rule file:
///   {"rules": [{"contains": ["substr", ...], "variant": "iter1",
///               "completions": ["..."]}]}
/// The first rule whose substrings all occur in the prompt (and whose
/// variant, when present, matches the request) wins.
class ReplayFixtureProvider : public GenerationProvider {
 public:
  struct Rule {
    std::vector<std::string> contains;
    std::optional<std::string> variant;
    std::vector<std::string> completions;
  };

  static ReplayFixtureProvider from_file(const std::filesystem::path& path) {
    auto doc = nlohmann::json::parse(read_file(path), nullptr, false);
    if (doc.is_discarded())
      throw ConfigError("fixture file is not valid JSON: " + path.string());
    return from_json(doc);
  }

  static ReplayFixtureProvider from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || !doc.contains("rules") || !doc["rules"].is_array())
      throw ConfigError("fixture document must hold a 'rules' array");
    ReplayFixtureProvider p;
    for (const auto& r : doc["rules"]) {
      Rule rule;
      for (const auto& s : r.at("contains")) rule.contains.push_back(s);
      if (r.contains("variant")) rule.variant = r["variant"].get<std::string>();
      for (const auto& c : r.at("completions"))
        rule.completions.push_back(c);
      p.rules_.push_back(std::move(rule));
    }
    return p;
  }

  std::string id() const override { return "fixture"; }

  std::vector<std::string> complete(const GenerationRequest& req) override {
    for (const auto& rule : rules_) {
      if (rule.variant.has_value() && *rule.variant != req.variant) continue;
      bool all = true;
      for (const auto& needle : rule.contains) {
        if (req.prompt.find(needle) == std::string::npos) {
          all = false;
          break;
        }
      }
      if (!all) continue;
      if (static_cast<int>(rule.completions.size()) > req.n_samples)
        return std::vector<std::string>(rule.completions.begin(),
                                        rule.completions.begin() +
                                            req.n_samples);
      return rule.completions;
    }
    throw ProviderError("no fixture rule matches prompt (variant '" +
                        req.variant + "'): " + req.prompt.substr(0, 80));
  }

 private:
  std::vector<Rule> rules_;
};

/// Decorator that records every request; tests use it to assert which stages
/// actually reached the provider.
class RecordingProvider : public GenerationProvider {
 public:
  explicit RecordingProvider(GenerationProvider& inner) : inner_(inner) {}

  std::string id() const override { return inner_.id(); }

  std::vector<std::string> complete(const GenerationRequest& req) override {
    {
      std::lock_guard<std::mutex> lock(mu_);
      requests_.push_back(req);
    }
    return inner_.complete(req);
  }

  std::vector<GenerationRequest> requests() const {
    std::lock_guard<std::mutex> lock(mu_);
    return requests_;
  }

 private:
  GenerationProvider& inner_;
  mutable std::mutex mu_;
  std::vector<GenerationRequest> requests_;
};

}  // namespace qreform
