#pragma once

#include <cstdio>
#include <string>

namespace nrssl {

// Fixed textual form for reals in CSV output; identical inputs give identical
// bytes.
inline std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace nrssl
