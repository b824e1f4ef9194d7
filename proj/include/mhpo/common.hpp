#ifndef MHPO_COMMON_HPP
#define MHPO_COMMON_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace mhpo {

/// Raised when a run configuration is structurally invalid (bad field,
/// unknown key, missing method-specific parameter).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for filesystem problems (missing run directory, unwritable output).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_finite(double x, const char* what) {
  if (!std::isfinite(x)) {
    throw std::domain_error(std::string(what) + " must be finite");
  }
}

inline void require_positive(double x, const char* what) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error(std::string(what) + " must be a positive finite real");
  }
}

/// Shortest text form of a double that round-trips exactly. Used everywhere a
/// float reaches a file so that identical runs produce identical bytes.
inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  // Trim to the shortest representation that still parses back to x.
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[32];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, x);
    if (std::strtod(shorter, nullptr) == x) return shorter;
  }
  return buf;
}

}  // namespace mhpo

#endif  // MHPO_COMMON_HPP
