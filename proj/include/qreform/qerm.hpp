#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "qreform/cache.hpp"
#include "qreform/embedding.hpp"
#include "qreform/errors.hpp"
#include "qreform/io.hpp"
#include "qreform/types.hpp"

namespace qreform {

/// Feature layout for a (initial query, cluster set) pair, d = embedding dim:
///   [ e_init (d) | mean cluster embedding (d) | |e_init - mean| (d)
///   | mean cos(e_init, cluster_i) | cluster_count / 3 ]
/// giving 3d + 2 features.
inline std::vector<double> featurize(const Embedding& e_init,
                                     const std::vector<Embedding>& clusters) {
  if (clusters.empty() || clusters.size() > 3)
    throw ConfigError("featurize needs 1 to 3 cluster embeddings, got " +
                      std::to_string(clusters.size()));
  for (const auto& c : clusters) require_same_dim(e_init, c, "featurize");
  Embedding mean = mean_embedding(clusters);
  double cos_sum = 0.0;
  for (const auto& c : clusters) cos_sum += cosine_similarity(e_init, c);
  std::vector<double> f;
  f.reserve(3 * e_init.size() + 2);
  f.insert(f.end(), e_init.begin(), e_init.end());
  f.insert(f.end(), mean.begin(), mean.end());
  for (std::size_t i = 0; i < e_init.size(); ++i)
    f.push_back(std::fabs(e_init[i] - mean[i]));
  f.push_back(cos_sum / static_cast<double>(clusters.size()));
  f.push_back(static_cast<double>(clusters.size()) / 3.0);
  return f;
}

/// Retrieval quality turned into a training label: at or above the
/// threshold is positive, strictly below is negative.
inline int quality_label(double ndcg, double threshold) {
  return ndcg >= threshold ? 1 : 0;
}

struct QermExample {
  std::string qid;
  std::vector<double> features;
  int label = 0;
  double ndcg = 0.0;
};

// ---------------------------------------------------------------------------
// Logistic reward model

inline double stable_sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

namespace detail {
inline double raw_logit(const std::vector<double>& w, double b,
                        const std::vector<double>& x) {
  if (w.size() != x.size())
    throw DimensionError("feature dim " + std::to_string(x.size()) +
                         " does not match model dim " +
                         std::to_string(w.size()));
  double z = b;
  for (std::size_t i = 0; i < w.size(); ++i) z += w[i] * x[i];
  return z;
}
}  // namespace detail

/// Mean cross-entropy in the overflow-safe form
/// log1p(exp(-|z|)) + max(z, 0) - y * z.
inline double logistic_loss(const std::vector<double>& w, double b,
                            const std::vector<std::vector<double>>& X,
                            const std::vector<int>& y) {
  if (X.size() != y.size() || X.empty())
    throw ConfigError("loss needs matching, non-empty X and y");
  double total = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double z = detail::raw_logit(w, b, X[i]);
    total += std::log1p(std::exp(-std::fabs(z))) + std::max(z, 0.0) -
             static_cast<double>(y[i]) * z;
  }
  return total / static_cast<double>(X.size());
}

/// Mean gradient of the loss above: per sample (sigmoid(z) - y) * x for the
/// weights, (sigmoid(z) - y) for the bias.
inline void logistic_gradient(const std::vector<double>& w, double b,
                              const std::vector<std::vector<double>>& X,
                              const std::vector<int>& y,
                              std::vector<double>& grad_w, double& grad_b) {
  if (X.size() != y.size() || X.empty())
    throw ConfigError("gradient needs matching, non-empty X and y");
  grad_w.assign(w.size(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < X.size(); ++i) {
    double err = stable_sigmoid(detail::raw_logit(w, b, X[i])) -
                 static_cast<double>(y[i]);
    for (std::size_t j = 0; j < w.size(); ++j) grad_w[j] += err * X[i][j];
    grad_b += err;
  }
  double inv = 1.0 / static_cast<double>(X.size());
  for (double& g : grad_w) g *= inv;
  grad_b *= inv;
}

struct QermModel {
  std::vector<double> weights;
  double bias = 0.0;
  int embedding_dim = 0;  // d behind the 3d + 2 feature layout

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json doc;
    doc["type"] = "logistic-reward";
    doc["embedding_dim"] = embedding_dim;
    doc["bias"] = bias;
    doc["weights"] = weights;
    return doc;
  }

  static QermModel from_json(const nlohmann::json& doc) {
    if (!doc.is_object() || doc.value("type", "") != "logistic-reward")
      throw ParseError("model document is not a logistic-reward model");
    QermModel m;
    m.embedding_dim = doc.at("embedding_dim").get<int>();
    m.bias = doc.at("bias").get<double>();
    for (const auto& v : doc.at("weights")) m.weights.push_back(v.get<double>());
    std::size_t expect = 3 * static_cast<std::size_t>(m.embedding_dim) + 2;
    if (m.embedding_dim < 1 || m.weights.size() != expect)
      throw ParseError("model weight count " +
                       std::to_string(m.weights.size()) +
                       " does not fit embedding dim " +
                       std::to_string(m.embedding_dim));
    return m;
  }
};

inline void save_model(const std::filesystem::path& path, const QermModel& m) {
  atomic_write_file(path, m.to_json().dump(2) + "\n");
}

inline QermModel load_model(const std::filesystem::path& path) {
  auto doc = nlohmann::json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded())
    throw ParseError("model file is not valid JSON: " + path.string());
  return QermModel::from_json(doc);
}

inline double infer_logit(const QermModel& m, const std::vector<double>& x) {
  return detail::raw_logit(m.weights, m.bias, x);
}

struct TrainOptions {
  int epochs = 500;
  double lr = 0.1;
  // Reserved for stochastic variants; the full-batch trainer is
  // deterministic and never reads it.
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> loss_trace;  // initial loss, then one entry per epoch
  bool degenerate = false;         // single-class data, prior-only model
};

/// Full-batch gradient descent from zero weights. Single-class data cannot
/// shape a decision boundary, so it degenerates to the clamped class prior.
inline std::pair<QermModel, TrainReport> train_reward_model(
    const std::vector<QermExample>& examples, int embedding_dim,
    const TrainOptions& opts = {}) {
  if (examples.empty()) throw ConfigError("cannot train on zero examples");
  if (opts.epochs < 1 || opts.lr <= 0.0)
    throw ConfigError("training needs epochs >= 1 and lr > 0");
  std::size_t dim = 3 * static_cast<std::size_t>(embedding_dim) + 2;
  std::vector<std::vector<double>> X;
  std::vector<int> y;
  for (const auto& ex : examples) {
    if (ex.features.size() != dim)
      throw DimensionError("example '" + ex.qid + "' has " +
                           std::to_string(ex.features.size()) +
                           " features, expected " + std::to_string(dim));
    X.push_back(ex.features);
    y.push_back(ex.label);
  }

  QermModel model;
  model.embedding_dim = embedding_dim;
  model.weights.assign(dim, 0.0);
  TrainReport report;

  bool all_same = std::all_of(y.begin(), y.end(),
                              [&](int v) { return v == y.front(); });
  if (all_same) {
    double p = static_cast<double>(y.front());
    p = std::clamp(p, 1e-6, 1.0 - 1e-6);
    model.bias = std::log(p / (1.0 - p));
    report.degenerate = true;
    report.loss_trace.push_back(logistic_loss(model.weights, model.bias, X, y));
    return {model, report};
  }

  report.loss_trace.push_back(logistic_loss(model.weights, model.bias, X, y));
  std::vector<double> gw;
  double gb = 0.0;
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    logistic_gradient(model.weights, model.bias, X, y, gw, gb);
    for (std::size_t j = 0; j < dim; ++j) model.weights[j] -= opts.lr * gw[j];
    model.bias -= opts.lr * gb;
    report.loss_trace.push_back(logistic_loss(model.weights, model.bias, X, y));
  }
  return {model, report};
}

/// Acceptance bar for the feedback loop: the mean first-pass logit over the
/// evaluation set.
inline double compute_epsilon(const QermModel& model,
                              const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ConfigError("epsilon needs at least one logit");
  double sum = 0.0;
  for (const auto& r : rows) sum += infer_logit(model, r);
  return sum / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Feedback loop

class QualityScorer {
 public:
  virtual ~QualityScorer() = default;
  virtual double score(const ClusterSet& clusters) = 0;
};

/// Scores a cluster set by embedding its queries and running the reward
/// model over the featurized pair.
class ModelScorer : public QualityScorer {
 public:
  ModelScorer(const QermModel& model, Embedding e_init,
              EmbeddingProvider& provider, const FileCache* cache = nullptr)
      : model_(model),
        e_init_(std::move(e_init)),
        provider_(provider),
        cache_(cache) {
    if (static_cast<int>(e_init_.size()) != model_.embedding_dim)
      throw DimensionError("initial embedding dim " +
                           std::to_string(e_init_.size()) +
                           " does not match model embedding dim " +
                           std::to_string(model_.embedding_dim));
  }

  double score(const ClusterSet& clusters) override {
    std::vector<Embedding> embs;
    for (const auto& q : clusters.clusters())
      embs.push_back(embed_cached(q, provider_, cache_));
    return infer_logit(model_, featurize(e_init_, embs));
  }

 private:
  QermModel model_;
  Embedding e_init_;
  EmbeddingProvider& provider_;
  const FileCache* cache_;
};

struct LoopRecord {
  int iteration;
  ClusterSet clusters;
  double logit;
  std::string decision;  // "accept" | "regenerate" | "exhausted"
};

struct LoopOutcome {
  ClusterSet chosen;
  int chosen_iteration;
  std::string terminal;  // "accept" | "return_best"
  std::vector<LoopRecord> history;
};

/// Called with the next iteration ordinal (1..max) to produce a fresh
/// cluster set for that round.
using ClusterRegenerator = std::function<ClusterSet(int iteration)>;

/// Iterative refinement: keep the current clusters when their logit reaches
/// epsilon, otherwise regenerate, up to max_regenerations extra rounds.
/// When every round falls short, the best-logit round wins (earliest on
/// ties).
inline LoopOutcome run_feedback_loop(const ClusterSet& initial,
                                     const ClusterRegenerator& regenerate,
                                     QualityScorer& scorer, double epsilon,
                                     int max_regenerations) {
  if (max_regenerations < 0)
    throw ConfigError("max_regenerations must be >= 0");
  std::vector<LoopRecord> history;
  ClusterSet current = initial;
  for (int t = 0;; ++t) {
    double logit = scorer.score(current);
    if (logit >= epsilon) {
      history.push_back({t, current, logit, "accept"});
      return LoopOutcome{current, t, "accept", std::move(history)};
    }
    if (t == max_regenerations) {
      history.push_back({t, current, logit, "exhausted"});
      break;
    }
    history.push_back({t, current, logit, "regenerate"});
    current = regenerate(t + 1);
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i)
    if (history[i].logit > history[best].logit) best = i;
  ClusterSet chosen = history[best].clusters;
  int chosen_iteration = history[best].iteration;
  return LoopOutcome{std::move(chosen), chosen_iteration, "return_best",
                     std::move(history)};
}

}  // namespace qreform
