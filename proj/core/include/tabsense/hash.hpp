#pragma once

#include <cstdint>
#include <string_view>

namespace tabsense {

// Seeded FNV-1a. std::hash is implementation-defined, and hashed feature
// layouts are part of the model file contract, so the hash must be pinned.
inline uint64_t hash64(std::string_view s, uint64_t seed) {
  uint64_t h = 14695981039346656037ull ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

// Second independent value for the same key, used for hashing-trick signs.
inline uint64_t hash64_alt(std::string_view s, uint64_t seed) {
  return hash64(s, seed ^ 0x9e3779b97f4a7c15ull);
}

}  // namespace tabsense
