#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/mention.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner {

struct PrfCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const { return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp); }
  double recall() const { return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn); }
  double f1() const {
    const double p = precision(), r = recall();
    return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
  }
};

struct EvalReport {
  PrfCounts micro;
  std::map<std::string, PrfCounts> per_type;

  std::size_t tp() const { return micro.tp; }
  std::size_t fp() const { return micro.fp; }
  std::size_t fn() const { return micro.fn; }
  double precision() const { return micro.precision(); }
  double recall() const { return micro.recall(); }
  double f1() const { return micro.f1(); }
};

/// Exact-match micro precision/recall/F1.
///
/// Mentions are compared as sets of (start, end, normalized type) per
/// sentence; scores are ignored and exact duplicates count once.
inline EvalReport score(const std::vector<std::vector<EntityMention>>& predicted,
                        const std::vector<std::vector<EntityMention>>& gold) {
  if (predicted.size() != gold.size()) {
    throw ContractError("evaluation", "prediction has " + std::to_string(predicted.size()) + " sentences, gold has " +
                                          std::to_string(gold.size()));
  }
  using Key = std::tuple<std::size_t, std::size_t, std::string>;
  auto as_set = [](const std::vector<EntityMention>& mentions) {
    std::set<Key> out;
    for (const auto& m : mentions) out.emplace(m.start, m.end, normalize_text(m.type));
    return out;
  };

  EvalReport report;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const auto pred_set = as_set(predicted[i]);
    const auto gold_set = as_set(gold[i]);
    for (const auto& key : pred_set) {
      auto& counts = report.per_type[std::get<2>(key)];
      if (gold_set.count(key)) {
        ++counts.tp;
      } else {
        ++counts.fp;
      }
    }
    for (const auto& key : gold_set) {
      if (!pred_set.count(key)) ++report.per_type[std::get<2>(key)].fn;
    }
  }
  for (const auto& [type, c] : report.per_type) {
    report.micro.tp += c.tp;
    report.micro.fp += c.fp;
    report.micro.fn += c.fn;
  }
  return report;
}

}  // namespace gliner
