#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "qreform/io.hpp"

namespace testutil {

namespace fs = std::filesystem;

// Unique scratch directory, removed on scope exit.
class TempDir {
public:
  explicit TempDir(const std::string& prefix = "qreform_test") {
    static std::atomic<uint64_t> counter{0};
    std::random_device rd;
    std::ostringstream name;
    name << prefix << "_" << rd() << "_" << counter.fetch_add(1);
    path_ = fs::temp_directory_path() / name.str();
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& leaf) const { return path_ / leaf; }

private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& content) {
  qreform::atomic_write_file(path, content);
}

// Eight documents over four topics, two per topic. Token overlap with the
// matching query makes the hash embedder rank the on-topic pair highest.
inline std::string tiny_corpus_jsonl() {
  return
    R"({"_id": "d1", "title": "Solar panels", "text": "solar power panel efficiency improvements for rooftop energy"})" "\n"
    R"({"_id": "d2", "title": "Solar storage", "text": "solar energy battery storage for cloudy days"})" "\n"
    R"({"_id": "d3", "title": "Model training", "text": "machine learning models trained on large datasets"})" "\n"
    R"({"_id": "d4", "title": "Model serving", "text": "serving machine learning predictions at low latency"})" "\n"
    R"({"_id": "d5", "title": "Roman empire", "text": "ancient roman history of the empire and senate"})" "\n"
    R"({"_id": "d6", "title": "Roman roads", "text": "roads and aqueducts of ancient rome"})" "\n"
    R"({"_id": "d7", "title": "Deep sea", "text": "deep sea creatures living near hydrothermal vents"})" "\n"
    R"({"_id": "d8", "title": "Ocean trench", "text": "exploring the deepest ocean trench habitats"})" "\n";
}

inline std::string tiny_queries_jsonl() {
  return
    R"({"_id": "q1", "text": "solar power efficiency"})" "\n"
    R"({"_id": "q2", "text": "machine learning models"})" "\n"
    R"({"_id": "q3", "text": "ancient roman history"})" "\n"
    R"({"_id": "q4", "text": "deep sea creatures"})" "\n";
}

inline std::string tiny_qrels_tsv() {
  return
    "query-id\tcorpus-id\tscore\n"
    "q1\td1\t2\n"
    "q1\td2\t1\n"
    "q2\td3\t2\n"
    "q2\td4\t1\n"
    "q3\td5\t2\n"
    "q3\td6\t1\n"
    "q4\td7\t2\n"
    "q4\td8\t1\n";
}

// Writes corpus.jsonl, queries.jsonl, qrels.tsv under dir.
inline void write_dataset(const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "corpus.jsonl", tiny_corpus_jsonl());
  write_text(dir / "queries.jsonl", tiny_queries_jsonl());
  write_text(dir / "qrels.tsv", tiny_qrels_tsv());
}

inline std::string slurp(const fs::path& path) { return qreform::read_file(path); }

}  // namespace testutil
