#pragma once

// Shortest round-trip decimal text for doubles in CSV output.

#include <charconv>
#include <ostream>
#include <string>

namespace betamon {

inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

struct Num {
  double v;
  friend std::ostream& operator<<(std::ostream& os, Num n) { return os << format_double(n.v); }
};

}  // namespace betamon
