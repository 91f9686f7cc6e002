#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner {

inline constexpr std::size_t kDefaultMaxTypes = 25;
inline constexpr std::size_t kDefaultMaxSequence = 512;

/// The unified sequence `([ENT] type)×M [SEP] sentence` with the positions
/// that the encoder output is read from.
struct EncodedPrompt {
  std::vector<TokenId> token_ids;
  std::vector<std::size_t> ent_positions;   // one [ENT] index per type
  std::vector<std::size_t> word_positions;  // first-subword index per word
  std::size_t sep_position = 0;
  std::vector<std::string> entity_types;
  std::vector<std::string> words;

  std::size_t num_types() const { return entity_types.size(); }
  std::size_t num_words() const { return words.size(); }
};

/// Builds the prompt. Types must already be deduplicated; `max_types == 0`
/// disables the type cap (inference chunks types itself).
inline EncodedPrompt build_prompt(const std::vector<std::string>& entity_types, const std::vector<std::string>& words,
                                  const Vocab& vocab, std::size_t max_types = kDefaultMaxTypes,
                                  std::size_t max_sequence = kDefaultMaxSequence) {
  if (entity_types.empty()) throw ContractError("prompt", "at least one entity type is required");
  if (words.empty()) throw ContractError("prompt", "at least one word is required");
  if (max_types != 0 && entity_types.size() > max_types) {
    throw ContractError("prompt", std::to_string(entity_types.size()) + " entity types exceed the limit of " +
                                      std::to_string(max_types));
  }
  std::unordered_set<std::string> seen;
  for (const auto& t : entity_types) {
    if (!seen.insert(normalize_text(t)).second) throw ContractError("prompt", "duplicate entity type '" + t + "'");
  }

  EncodedPrompt prompt;
  prompt.entity_types = entity_types;
  prompt.words = words;
  auto& ids = prompt.token_ids;

  for (const auto& type : entity_types) {
    const auto type_words = split_whitespace(type);
    if (type_words.empty()) throw ContractError("prompt", "entity type strings must not be blank");
    prompt.ent_positions.push_back(ids.size());
    ids.push_back(vocab.ent_id());
    for (const auto& w : type_words) {
      const auto seg = segment(w, vocab);
      ids.insert(ids.end(), seg.subword_ids.begin(), seg.subword_ids.end());
    }
  }
  prompt.sep_position = ids.size();
  ids.push_back(vocab.sep_id());
  for (const auto& w : words) {
    const auto seg = segment(w, vocab);
    prompt.word_positions.push_back(ids.size() + WordSegmentation::first_index_within_word);
    ids.insert(ids.end(), seg.subword_ids.begin(), seg.subword_ids.end());
  }
  if (ids.size() > max_sequence) {
    throw SizingError("prompt", "sequence of " + std::to_string(ids.size()) + " positions exceeds the maximum of " +
                                    std::to_string(max_sequence));
  }
  return prompt;
}

/// Contiguous groups of at most max_types, covering every type once.
inline std::vector<std::vector<std::string>> chunk_types(const std::vector<std::string>& entity_types,
                                                          std::size_t max_types) {
  if (max_types == 0) throw ContractError("prompt", "max_types must be at least 1");
  std::vector<std::vector<std::string>> groups;
  for (std::size_t i = 0; i < entity_types.size(); i += max_types) {
    const auto end = std::min(entity_types.size(), i + max_types);
    groups.emplace_back(entity_types.begin() + static_cast<std::ptrdiff_t>(i),
                        entity_types.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return groups;
}

}  // namespace gliner
