#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace ig {

// Dense row-major extents, outermost first. [B,C,H,W] for images, [B,D] for
// feature matrices, [] never occurs (scalars are [1]).
using Shape = std::vector<int>;

inline long numel(const Shape& s) {
  long n = 1;
  for (int e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

}  // namespace ig
