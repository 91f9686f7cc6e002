#pragma once

#include <cstddef>
#include <string>
#include <tuple>

namespace gliner {

/// A typed word span, inclusive on both ends. Gold mentions carry score 1.
struct EntityMention {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;
  double score = 1.0;

  // Identity ignores the score.
  friend bool operator==(const EntityMention& a, const EntityMention& b) {
    return a.start == b.start && a.end == b.end && a.type == b.type;
  }
  friend bool operator<(const EntityMention& a, const EntityMention& b) {
    return std::tie(a.start, a.end, a.type) < std::tie(b.start, b.end, b.type);
  }
};

}  // namespace gliner
