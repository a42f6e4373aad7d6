#pragma once

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace f1net {

inline constexpr const char* kToolVersion = "f1net 0.1.0";

// Raised when data does not conform to the configured space (dimensions,
// exponents, file/space mismatches).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when an iterative numeric routine fails to converge.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct parse_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bit-exact binary64 serialisation via C hex-float notation.
inline std::string double_to_hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return std::string(buf);
}

inline double double_from_hex(const std::string& s) {
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str()) throw parse_error("not a hex float: '" + s + "'");
  return v;
}

// Shortest round-trippable decimal, used in CSV output.
inline std::string double_to_csv(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return std::string(buf);
}

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace f1net
