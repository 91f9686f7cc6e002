#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/numerics/graph.hpp"
#include "gliner/params.hpp"
#include "gliner/prompt.hpp"

namespace gliner {

template <class T>
struct EncoderOutput {
  nn::Tensor<T> p;  // [M×D], rows at the [ENT] markers
  nn::Tensor<T> h;  // [N×D], rows at each word's first subword
};

namespace detail {

template <class T>
nn::Tensor<T> linear(nn::Graph<T>& g, const ModelParams<T>& params, const std::string& prefix, const nn::Tensor<T>& x) {
  return g.add(g.matmul(x, params.at(prefix + ".weight")), params.at(prefix + ".bias"));
}

template <class T>
nn::Tensor<T> norm(nn::Graph<T>& g, const ModelParams<T>& params, const std::string& prefix, const nn::Tensor<T>& x) {
  return g.layer_norm(x, params.at(prefix + ".gamma"), params.at(prefix + ".beta"),
                      static_cast<T>(params.config().layer_norm_eps));
}

}  // namespace detail

/// Contextual representations for every position of the unified sequence.
///
/// Pre-norm transformer blocks with full bidirectional multi-head attention
/// and learned absolute positions. If `attention` is non-null the per-head
/// attention matrices are appended to it.
template <class T>
nn::Tensor<T> encode_sequence(nn::Graph<T>& g, const ModelParams<T>& params, const std::vector<TokenId>& ids,
                              nn::Mode mode, nn::Rng* rng, std::vector<nn::Tensor<T>>* attention = nullptr) {
  const auto& cfg = params.config();
  if (ids.empty()) throw ContractError("encoder", "empty token sequence");
  if (ids.size() > cfg.max_positions) {
    throw SizingError("encoder", "sequence of " + std::to_string(ids.size()) + " tokens exceeds max_positions " +
                                     std::to_string(cfg.max_positions));
  }
  std::vector<std::size_t> token_rows(ids.size()), position_rows(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= cfg.vocab_size) {
      throw ContractError("encoder", "token id " + std::to_string(ids[i]) + " out of range for vocabulary of " +
                                         std::to_string(cfg.vocab_size));
    }
    token_rows[i] = ids[i];
    position_rows[i] = i;
  }

  const std::size_t width = cfg.width, heads = cfg.heads, head_width = width / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(head_width));

  auto x = g.add(g.gather_rows(params.at("embed.token"), token_rows),
                 g.gather_rows(params.at("embed.position"), position_rows));
  x = g.dropout(x, cfg.dropout, mode, rng);

  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const std::string p = "encoder." + std::to_string(l);

    auto a = detail::norm(g, params, p + ".attn_norm", x);
    auto q = detail::linear(g, params, p + ".attn.query", a);
    auto k = detail::linear(g, params, p + ".attn.key", a);
    auto v = detail::linear(g, params, p + ".attn.value", a);
    std::vector<nn::Tensor<T>> head_out;
    for (std::size_t h = 0; h < heads; ++h) {
      auto qh = g.slice_cols(q, h * head_width, head_width);
      auto kh = g.slice_cols(k, h * head_width, head_width);
      auto vh = g.slice_cols(v, h * head_width, head_width);
      auto weights = g.softmax_rows(g.scale(g.matmul(qh, kh, true), inv_sqrt));
      if (attention) attention->push_back(weights);
      head_out.push_back(g.matmul(weights, vh));
    }
    auto attended = detail::linear(g, params, p + ".attn.output", g.concat_cols(head_out));
    x = g.add(x, g.dropout(attended, cfg.dropout, mode, rng));

    auto f = detail::norm(g, params, p + ".ffn_norm", x);
    f = g.gelu(detail::linear(g, params, p + ".ffn.in", f));
    f = detail::linear(g, params, p + ".ffn.out", f);
    x = g.add(x, g.dropout(f, cfg.dropout, mode, rng));
  }
  return detail::norm(g, params, "encoder.final_norm", x);
}

/// Encodes a prompt and splits the output into entity-marker rows p and word rows h.
template <class T>
EncoderOutput<T> encode(nn::Graph<T>& g, const ModelParams<T>& params, const EncodedPrompt& prompt, nn::Mode mode,
                        nn::Rng* rng, std::vector<nn::Tensor<T>>* attention = nullptr) {
  auto hidden = encode_sequence(g, params, prompt.token_ids, mode, rng, attention);
  return {g.gather_rows(hidden, prompt.ent_positions), g.gather_rows(hidden, prompt.word_positions)};
}

}  // namespace gliner
