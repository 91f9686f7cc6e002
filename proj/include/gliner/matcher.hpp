#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "gliner/encoder.hpp"
#include "gliner/error.hpp"
#include "gliner/numerics/graph.hpp"
#include "gliner/params.hpp"
#include "gliner/prompt.hpp"

namespace gliner {

/// Inclusive word range [start, end].
struct SpanIndex {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t width() const { return end - start + 1; }
  friend bool operator==(const SpanIndex&, const SpanIndex&) = default;
  friend auto operator<=>(const SpanIndex&, const SpanIndex&) = default;
};

inline std::size_t span_count(std::size_t num_words, std::size_t max_width) {
  const std::size_t w = std::min(num_words, max_width);
  // Σ_{k=1..w} (N − k + 1)
  return w * num_words - w * (w - 1) / 2;
}

/// All spans of width ≤ max_width, ordered by start then end.
inline std::vector<SpanIndex> enumerate_spans(std::size_t num_words, std::size_t max_width) {
  if (num_words == 0 || max_width == 0) throw ContractError("matcher", "enumerate_spans needs N ≥ 1 and K ≥ 1");
  std::vector<SpanIndex> spans;
  spans.reserve(span_count(num_words, max_width));
  for (std::size_t i = 0; i < num_words; ++i) {
    for (std::size_t j = i; j < std::min(num_words, i + max_width); ++j) spans.push_back({i, j});
  }
  return spans;
}

// Row of `span` in enumerate_spans(num_words, max_width), or npos when the span is not enumerated.
inline std::size_t span_row(SpanIndex span, std::size_t num_words, std::size_t max_width) {
  if (span.start > span.end || span.end >= num_words || span.width() > max_width) return std::string::npos;
  std::size_t row = 0;
  for (std::size_t s = 0; s < span.start; ++s) row += std::min(max_width, num_words - s);
  return row + (span.end - span.start);
}

namespace detail {

// Two-layer feedforward head: out(dropout(relu(in(x)))).
template <class T>
nn::Tensor<T> head_ffn(nn::Graph<T>& g, const ModelParams<T>& params, const std::string& prefix, const nn::Tensor<T>& x,
                       nn::Mode mode, nn::Rng* rng) {
  auto hidden = g.relu(linear(g, params, prefix + ".in", x));
  hidden = g.dropout(hidden, params.config().head_dropout, mode, rng);
  return linear(g, params, prefix + ".out", hidden);
}

}  // namespace detail

/// q = FFN(p), row-wise.
template <class T>
nn::Tensor<T> entity_embed(nn::Graph<T>& g, const nn::Tensor<T>& p, const ModelParams<T>& params,
                           nn::Mode mode = nn::Mode::eval, nn::Rng* rng = nullptr) {
  if (p.rank() != 2 || p.cols() != params.config().width) {
    throw DimensionError("matcher", "entity representations must be [M×" + std::to_string(params.config().width) +
                                        "], got " + nn::shape_string(p.shape()));
  }
  return detail::head_ffn(g, params, "entity_head", p, mode, rng);
}

/// S_ij = FFN([h_i ; h_j]) for every listed span, computed as one batch.
template <class T>
nn::Tensor<T> span_embed(nn::Graph<T>& g, const nn::Tensor<T>& h, const std::vector<SpanIndex>& spans,
                         const ModelParams<T>& params, nn::Mode mode = nn::Mode::eval, nn::Rng* rng = nullptr) {
  if (h.rank() != 2 || h.cols() != params.config().width) {
    throw DimensionError("matcher", "word representations must be [N×" + std::to_string(params.config().width) +
                                        "], got " + nn::shape_string(h.shape()));
  }
  if (spans.empty()) throw ContractError("matcher", "span_embed with no spans");
  std::vector<std::size_t> starts, ends;
  starts.reserve(spans.size());
  ends.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.start > s.end || s.end >= h.dim(0)) {
      throw ContractError("matcher", "span (" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                         ") out of range for " + std::to_string(h.dim(0)) + " words");
    }
    starts.push_back(s.start);
    ends.push_back(s.end);
  }
  auto pairs = g.concat_cols({g.gather_rows(h, starts), g.gather_rows(h, ends)});
  return detail::head_ffn(g, params, "span_head", pairs, mode, rng);
}

/// Matching logits S·qᵀ, shape [|spans|×M].
template <class T>
nn::Tensor<T> match_logits(nn::Graph<T>& g, const nn::Tensor<T>& spans, const nn::Tensor<T>& types) {
  if (spans.rank() != 2 || types.rank() != 2 || spans.cols() != types.cols()) {
    throw DimensionError("matcher", "span width " + nn::shape_string(spans.shape()) + " and entity width " +
                                        nn::shape_string(types.shape()) + " disagree");
  }
  return g.matmul(spans, types, true);
}

/// Matching probabilities φ for one sentence, row-major over (span, type).
struct ScoreTable {
  std::size_t num_words = 0;
  std::size_t max_width = 0;
  std::vector<SpanIndex> spans;
  std::vector<std::string> types;
  std::vector<double> probs;
  std::vector<double> logits;  // optional; empty when unknown

  double prob(std::size_t span, std::size_t type) const { return probs[span * types.size() + type]; }
};

// σ(x) kept strictly inside (0, 1).
inline double open_sigmoid(double x) {
  const double p = nn::kernels::sigmoid(x);
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  return std::clamp(p, lo, hi);
}

template <class T>
ScoreTable match_scores(const nn::Tensor<T>& logits, const std::vector<SpanIndex>& spans,
                        const std::vector<std::string>& types, std::size_t num_words, std::size_t max_width) {
  if (logits.rank() != 2 || logits.dim(0) != spans.size() || logits.dim(1) != types.size()) {
    throw DimensionError("matcher", "logit table " + nn::shape_string(logits.shape()) + " does not match " +
                                        std::to_string(spans.size()) + " spans × " + std::to_string(types.size()) +
                                        " types");
  }
  ScoreTable table{num_words, max_width, spans, types, {}, {}};
  table.probs.reserve(logits.size());
  table.logits.reserve(logits.size());
  for (auto v : logits.data()) {
    table.logits.push_back(static_cast<double>(v));
    table.probs.push_back(open_sigmoid(static_cast<double>(v)));
  }
  return table;
}

template <class T>
struct PromptScores {
  std::vector<SpanIndex> spans;
  nn::Tensor<T> logits;  // [|spans|×M]
};

/// Full forward pass: prompt → encoder → heads → logits.
template <class T>
PromptScores<T> score_prompt(nn::Graph<T>& g, const ModelParams<T>& params, const EncodedPrompt& prompt, nn::Mode mode,
                             nn::Rng* rng) {
  auto enc = encode(g, params, prompt, mode, rng);
  auto q = entity_embed(g, enc.p, params, mode, rng);
  auto spans = enumerate_spans(prompt.num_words(), params.config().max_span_width);
  auto s = span_embed(g, enc.h, spans, params, mode, rng);
  return {std::move(spans), match_logits(g, s, q)};
}

/// Eval-mode score table for one prompt.
template <class T>
ScoreTable predict_table(const ModelParams<T>& params, const EncodedPrompt& prompt) {
  nn::Graph<T> g;
  auto out = score_prompt(g, params, prompt, nn::Mode::eval, nullptr);
  return match_scores(out.logits, out.spans, prompt.entity_types, prompt.num_words(),
                      params.config().max_span_width);
}

/// Joins per-chunk tables over the same sentence column-wise, in chunk order.
inline ScoreTable merge_type_chunks(const std::vector<ScoreTable>& chunks) {
  if (chunks.empty()) throw ContractError("matcher", "no score tables to merge");
  ScoreTable out{chunks[0].num_words, chunks[0].max_width, chunks[0].spans, {}, {}, {}};
  bool with_logits = true;
  for (const auto& c : chunks) {
    if (c.spans != out.spans) throw ContractError("matcher", "chunked tables disagree on spans");
    out.types.insert(out.types.end(), c.types.begin(), c.types.end());
    with_logits = with_logits && c.logits.size() == c.probs.size();
  }
  const std::size_t m = out.types.size();
  out.probs.assign(out.spans.size() * m, 0.0);
  if (with_logits) out.logits.assign(out.spans.size() * m, 0.0);
  std::size_t col = 0;
  for (const auto& c : chunks) {
    const std::size_t cm = c.types.size();
    for (std::size_t s = 0; s < out.spans.size(); ++s) {
      for (std::size_t t = 0; t < cm; ++t) {
        out.probs[s * m + col + t] = c.probs[s * cm + t];
        if (with_logits) out.logits[s * m + col + t] = c.logits[s * cm + t];
      }
    }
    col += cm;
  }
  return out;
}

/// Scores any number of types by chunking them into prompts of at most max_types.
template <class T>
ScoreTable predict_table_chunked(const ModelParams<T>& params, const Vocab& vocab, const std::vector<std::string>& types,
                                 const std::vector<std::string>& words, std::size_t max_types) {
  std::vector<ScoreTable> tables;
  for (const auto& group : chunk_types(types, max_types)) {
    tables.push_back(predict_table(params, build_prompt(group, words, vocab, max_types, params.config().max_positions)));
  }
  return merge_type_chunks(tables);
}

}  // namespace gliner
