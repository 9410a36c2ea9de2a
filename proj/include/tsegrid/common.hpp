// Copyright 2026 tsegrid authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef TSEGRID_COMMON_HPP_
#define TSEGRID_COMMON_HPP_

#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>

namespace tsegrid {

// Error taxonomy. Every failure mode named in the module contracts maps to
// exactly one of these, so callers (and the CLI exit-code table) can
// dispatch on type.
class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg)
      : std::runtime_error("shape error: " + msg) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg)
      : std::runtime_error("config error: " + msg) {}
};

class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& msg)
      : std::runtime_error("input error: " + msg) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg)
      : std::runtime_error("numeric error: " + msg) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg)
      : std::runtime_error("io error: " + msg) {}
};

// Locale-independent fixed formatting ("%.3f" style). The C locale is never
// changed by this library, but report emission must not depend on that.
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s(buf);
  for (char& c : s)
    if (c == ',') c = '.';
  return s;
}

}  // namespace tsegrid

#endif  // TSEGRID_COMMON_HPP_
