#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace consult {

// FNV-1a, 64-bit. Stable across platforms; used for config digests and
// gateway cache keys.
inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t hash = 1469598103934665603ull;
  for (unsigned char c : data) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

inline std::string hex64(std::uint64_t value) {
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[value & 0xf];
    value >>= 4;
  }
  return out;
}

inline std::string digest_hex(std::string_view data) {
  return hex64(fnv1a64(data));
}

}  // namespace consult
