#pragma once

#include <charconv>
#include <string>

namespace rsfl {

/// Shortest round-trip decimal, '.' separator regardless of locale.
inline std::string format_double(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace rsfl
