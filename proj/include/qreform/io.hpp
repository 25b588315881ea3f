#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "qreform/errors.hpp"

namespace qreform {

namespace fs = std::filesystem;

// Write-temp-then-rename so concurrent readers never observe a torn file.
inline void atomic_write_file(const fs::path& path, const std::string& data) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream tmp_name;
  tmp_name << path.filename().string() << ".tmp."
           << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
           << counter.fetch_add(1);
  fs::path tmp = path.parent_path() / tmp_name.str();
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open temp file for write: " + tmp.string());
    out << data;
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename failed for " + path.string() + ": " + ec.message());
  }
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

/// Calls `fn(line_number, parsed)` for every non-blank line of a JSONL file.
inline void for_each_jsonl(
    const fs::path& path,
    const std::function<void(std::size_t, const nlohmann::json&)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open JSONL file: " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto doc = nlohmann::json::parse(line, nullptr, false);
    if (doc.is_discarded())
      throw ParseError(path.string() + ":" + std::to_string(lineno) +
                       ": invalid JSON line");
    fn(lineno, doc);
  }
}

template <typename Json>
inline void write_jsonl(const fs::path& path, const std::vector<Json>& rows) {
  std::ostringstream out;
  for (const auto& row : rows) out << row.dump() << "\n";
  atomic_write_file(path, out.str());
}

/// Runs `fn(i)` for i in [0, count) on up to `parallelism` worker threads.
/// The first exception is rethrown on the caller thread after all workers
/// finish.
inline void parallel_for(std::size_t count, int parallelism,
                         const std::function<void(std::size_t)>& fn) {
  if (parallelism < 1) parallelism = 1;
  std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(parallelism), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace qreform
