#pragma once

#include <cmath>
#include <cstdio>
#include <string>

namespace consense {

/// Nine significant digits, the precision used in every output file.
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace consense
