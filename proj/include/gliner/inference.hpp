#pragma once

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "gliner/decoder.hpp"
#include "gliner/evaluation.hpp"
#include "gliner/matcher.hpp"
#include "gliner/mention.hpp"
#include "gliner/params.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner {

/// A sentence with its gold mentions.
struct TrainingExample {
  std::string id;
  std::vector<std::string> words;
  std::vector<EntityMention> gold;

  /// Distinct gold types in order of first appearance.
  std::vector<std::string> positive_types() const {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& m : gold) {
      if (seen.insert(normalize_text(m.type)).second) out.push_back(m.type);
    }
    return out;
  }

  void validate() const {
    const std::string where = id.empty() ? std::string("example") : "example " + id;
    if (words.empty()) throw ContractError("trainer", where + " has no words");
    std::set<std::tuple<std::size_t, std::size_t, std::string>> seen;
    for (const auto& m : gold) {
      if (m.start > m.end || m.end >= words.size()) {
        throw ContractError("trainer", where + " has span [" + std::to_string(m.start) + ", " + std::to_string(m.end) +
                                           "] outside " + std::to_string(words.size()) + " words");
      }
      if (m.type.empty()) throw ContractError("trainer", where + " has an empty entity type");
      if (!seen.emplace(m.start, m.end, m.type).second) {
        throw ContractError("trainer", where + " repeats mention [" + std::to_string(m.start) + ", " +
                                           std::to_string(m.end) + ", " + m.type + "]");
      }
    }
  }
};

/// Sorted distinct gold types across a dataset.
inline std::vector<std::string> type_inventory(const std::vector<TrainingExample>& examples) {
  std::set<std::string> types;
  for (const auto& ex : examples) {
    for (const auto& m : ex.gold) types.insert(m.type);
  }
  return {types.begin(), types.end()};
}

/// Scores every type against one sentence, chunking prompts at max_types, and decodes.
template <class T>
std::vector<EntityMention> predict_mentions(const ModelParams<T>& params, const Vocab& vocab,
                                            const std::vector<std::string>& words,
                                            const std::vector<std::string>& types, const DecodeConfig& decode_config,
                                            std::size_t max_types = kDefaultMaxTypes, ScoreTable* table_out = nullptr) {
  auto table = predict_table_chunked(params, vocab, types, words, max_types);
  auto mentions = decode(table, decode_config);
  if (table_out) *table_out = std::move(table);
  return mentions;
}

template <class T>
EvalReport evaluate_model(const ModelParams<T>& params, const Vocab& vocab, const std::vector<TrainingExample>& examples,
                          const std::vector<std::string>& types, const DecodeConfig& decode_config,
                          std::size_t max_types = kDefaultMaxTypes) {
  std::vector<std::vector<EntityMention>> pred, gold;
  for (const auto& ex : examples) {
    pred.push_back(predict_mentions(params, vocab, ex.words, types, decode_config, max_types));
    gold.push_back(ex.gold);
  }
  return score(pred, gold);
}

}  // namespace gliner
