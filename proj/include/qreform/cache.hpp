#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>

#include "qreform/errors.hpp"
#include "qreform/hash.hpp"
#include "qreform/io.hpp"

namespace qreform {

/// Content-addressed on-disk cache: one file per key under `dir`, filename =
/// hex content hash, value = raw payload bytes. Writes are atomic renames, so
/// concurrent readers and writers of distinct keys never interfere and a
/// duplicate write of one key is last-writer-wins with both callers seeing a
/// complete value.
class FileCache {
 public:
  explicit FileCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  const std::filesystem::path& dir() const { return dir_; }

  std::optional<std::string> get(const std::string& key) const {
    std::ifstream in(entry_path(key), std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
  }

  void put(const std::string& key, const std::string& value) const {
    atomic_write_file(entry_path(key), value);
  }

  bool contains(const std::string& key) const {
    return std::filesystem::exists(entry_path(key));
  }

 private:
  std::filesystem::path entry_path(const std::string& key) const {
    for (char c : key) {
      bool hex = (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
      if (!hex) throw Error("cache key must be lowercase hex: " + key);
    }
    return dir_ / key;
  }

  std::filesystem::path dir_;
};

}  // namespace qreform
