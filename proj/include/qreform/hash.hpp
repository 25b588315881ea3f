#pragma once

#include <cstdint>
#include <string>
#include <string_view>

// Deterministic, platform-stable hashing. std::hash is unspecified across
// implementations, so cache keys and the mock embedder use FNV-1a plus a
// splitmix64 expander instead.

namespace qreform {

constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline std::uint64_t fnv1a64(std::string_view data,
                             std::uint64_t seed = kFnvOffset) {
  std::uint64_t h = seed;
  for (unsigned char c : data) {
    h ^= static_cast<std::uint64_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::string to_hex(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return out;
}

// 128-bit content key as 32 hex chars: two independent FNV passes.
inline std::string content_key(std::string_view data) {
  std::uint64_t lo = fnv1a64(data);
  std::uint64_t hi = fnv1a64(data, 0x6c62272e07bb0142ULL);
  return to_hex(hi) + to_hex(lo);
}

}  // namespace qreform
