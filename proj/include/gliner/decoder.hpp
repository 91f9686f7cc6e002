#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include <boost/sort/spreadsort/integer_sort.hpp>

#include "gliner/error.hpp"
#include "gliner/matcher.hpp"
#include "gliner/mention.hpp"

namespace gliner {

enum class DecodeMode { flat, nested };

struct DecodeConfig {
  DecodeMode mode = DecodeMode::flat;
  double threshold = 0.5;  // strict: only φ > threshold is a candidate
  // Lets one span carry several types. Off by default.
  bool multi_label = false;

  void validate() const {
    if (!(threshold > 0.0 && threshold < 1.0)) throw ConfigError("decoder", "threshold must lie in (0, 1)");
  }
};

struct DecodeStats {
  std::size_t candidates = 0;
  std::size_t pops = 0;
};

/// Pop order: score descending, then start, end and type ascending.
inline bool decode_precedes(const EntityMention& a, const EntityMention& b) {
  if (a.score != b.score) return a.score > b.score;
  return std::tie(a.start, a.end, a.type) < std::tie(b.start, b.end, b.type);
}

namespace detail {

template <class A, class B>
bool spans_compatible(const A& candidate, const B& accepted, const DecodeConfig& config) {
  const bool identical = candidate.start == accepted.start && candidate.end == accepted.end;
  if (identical) return config.multi_label && candidate.type != accepted.type;
  const bool disjoint = candidate.end < accepted.start || accepted.end < candidate.start;
  if (disjoint) return true;
  if (config.mode == DecodeMode::flat) return false;
  const bool candidate_inside = accepted.start <= candidate.start && candidate.end <= accepted.end;
  const bool accepted_inside = candidate.start <= accepted.start && accepted.end <= candidate.end;
  return candidate_inside || accepted_inside;
}

// Queue entry: the score and a key whose numeric order is (start, end, type rank).
struct Candidate {
  static constexpr unsigned kTypeBits = 16, kEndBits = 24, kStartBits = 24;
  double score;
  std::uint64_t key;

  static std::uint64_t pack(std::size_t start, std::size_t end, std::uint32_t type_rank) {
    return (std::uint64_t(start) << (kEndBits + kTypeBits)) | (std::uint64_t(end) << kTypeBits) | type_rank;
  }
  std::uint32_t start_word() const { return static_cast<std::uint32_t>(key >> (kEndBits + kTypeBits)); }
  std::uint32_t end_word() const { return static_cast<std::uint32_t>((key >> kTypeBits) & ((1u << kEndBits) - 1)); }
  std::uint32_t type_rank() const { return static_cast<std::uint32_t>(key & ((1u << kTypeBits) - 1)); }
};

inline bool candidate_precedes(const Candidate& a, const Candidate& b) {
  return a.score != b.score ? a.score > b.score : a.key < b.key;
}

// Radix key for positive scores: inverted IEEE bits order by score descending.
struct CandidateRadix {
  std::uint64_t operator()(const Candidate& c, unsigned offset) const {
    return ~std::bit_cast<std::uint64_t>(c.score) >> offset;
  }
};

inline void sort_candidates(std::vector<Candidate>& candidates) {
  boost::sort::spreadsort::integer_sort(candidates.begin(), candidates.end(), CandidateRadix{}, candidate_precedes);
}

struct SpanRecord {
  std::uint32_t start;
  std::uint32_t end;
  std::uint32_t type;
};

// Accepted spans bucketed by start word. Any span overlapping [s, e] starts
// in [s - W + 1, e], where W is the widest span the table can offer.
class AcceptedSpans {
 public:
  AcceptedSpans(const DecodeConfig& config, std::size_t words, std::size_t max_width)
      : config_(config), max_width_(max_width), by_start_(words) {}

  bool admits(const SpanRecord& c) const {
    const std::size_t first = c.start + 1 > max_width_ ? c.start + 1 - max_width_ : 0;
    for (std::size_t w = first; w <= c.end; ++w) {
      for (const auto& a : by_start_[w]) {
        if (!spans_compatible(c, a, config_)) return false;
      }
    }
    return true;
  }

  void insert(const SpanRecord& c) { by_start_[c.start].push_back(c); }

 private:
  DecodeConfig config_;
  std::size_t max_width_;
  std::vector<std::vector<SpanRecord>> by_start_;
};

// Rank of each column when types are ordered lexicographically.
inline std::vector<std::uint32_t> type_ranks(const std::vector<std::string>& types) {
  std::vector<std::uint32_t> order(types.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return types[a] < types[b]; });
  std::vector<std::uint32_t> rank(types.size());
  std::uint32_t r = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && types[order[i]] != types[order[i - 1]]) ++r;
    rank[order[i]] = r;
  }
  return rank;
}

inline void check_table(const ScoreTable& table) {
  if (table.num_words >= (std::size_t{1} << Candidate::kEndBits) || table.types.size() >= (std::size_t{1} << Candidate::kTypeBits)) {
    throw ContractError("decoder", "score table exceeds the supported size (2^24 words, 2^16 types)");
  }
  for (const auto& sp : table.spans) {
    if (sp.start > sp.end || sp.end >= (std::size_t{1} << Candidate::kEndBits)) {
      throw ContractError("decoder", "span [" + std::to_string(sp.start) + ", " + std::to_string(sp.end) + "] is invalid");
    }
  }
  if (table.probs.size() != table.spans.size() * table.types.size()) {
    throw ContractError("decoder", "score table has " + std::to_string(table.probs.size()) + " probabilities for " +
                                       std::to_string(table.spans.size()) + " spans × " +
                                       std::to_string(table.types.size()) + " types");
  }
}

}  // namespace detail

/// Whether `candidate` may join `accepted` under the mode's overlap rule.
inline bool compatible(const EntityMention& candidate, const EntityMention& accepted, const DecodeConfig& config) {
  return detail::spans_compatible(candidate, accepted, config);
}

/// Candidates φ > threshold in table order.
inline std::vector<EntityMention> decode_candidates(const ScoreTable& table, double threshold) {
  detail::check_table(table);
  std::vector<EntityMention> out;
  const std::size_t m = table.types.size();
  for (std::size_t s = 0; s < table.spans.size(); ++s) {
    for (std::size_t t = 0; t < m; ++t) {
      const double p = table.probs[s * m + t];
      if (p > threshold) out.push_back({table.spans[s].start, table.spans[s].end, table.types[t], p});
    }
  }
  return out;
}

/// Greedy span selection in priority order.
///
/// Candidates are popped best-first and kept when compatible with everything
/// kept so far. The result is sorted by (start, end, type).
inline std::vector<EntityMention> decode(const ScoreTable& table, const DecodeConfig& config,
                                         DecodeStats* stats = nullptr) {
  config.validate();
  detail::check_table(table);
  const std::size_t m = table.types.size();
  const auto rank = detail::type_ranks(table.types);
  std::vector<std::uint32_t> column_of(m);
  for (std::size_t t = 0; t < m; ++t) column_of[rank[t]] = static_cast<std::uint32_t>(t);
  std::vector<detail::Candidate> candidates;
  for (std::size_t s = 0; s < table.spans.size(); ++s) {
    for (std::size_t t = 0; t < m; ++t) {
      const double p = table.probs[s * m + t];
      if (p > config.threshold) candidates.push_back({p, detail::Candidate::pack(table.spans[s].start, table.spans[s].end, rank[t])});
    }
  }
  // The queue is static once built, so a sorted array serves it in pop order.
  detail::sort_candidates(candidates);

  std::size_t words = 0, widest = 1;
  for (const auto& sp : table.spans) {
    words = std::max(words, sp.end + 1);
    widest = std::max(widest, sp.end - sp.start + 1);
  }

  DecodeStats local;
  local.candidates = candidates.size();
  detail::AcceptedSpans accepted(config, words, widest);
  std::vector<EntityMention> out;
  for (const auto& top : candidates) {
    ++local.pops;
    const detail::SpanRecord span{top.start_word(), top.end_word(), top.type_rank()};
    if (accepted.admits(span)) {
      accepted.insert(span);
      out.push_back({span.start, span.end, table.types[column_of[span.type]], top.score});
    }
  }
  std::sort(out.begin(), out.end());
  if (stats) *stats = local;
  return out;
}

}  // namespace gliner
