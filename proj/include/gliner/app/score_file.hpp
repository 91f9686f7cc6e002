#pragma once

// Score table file: one JSON record per sentence,
//   {"num_words": N, "k": K, "types": [...], "spans": [[i, j], ...],
//    "probs": [...], "logits": [...], "words": [...]}
// probs/logits are row-major over (span, type); logits and words are optional.

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gliner/error.hpp"
#include "gliner/matcher.hpp"

namespace gliner::app {

using nlohmann::json;

struct ScoreRecord {
  ScoreTable table;
  std::vector<std::string> words;  // may be empty
};

inline json to_json(const ScoreRecord& r) {
  json spans = json::array();
  for (const auto& s : r.table.spans) spans.push_back({s.start, s.end});
  json j = {{"num_words", r.table.num_words}, {"k", r.table.max_width}, {"types", r.table.types},
            {"spans", spans},                 {"probs", r.table.probs}};
  if (!r.table.logits.empty()) j["logits"] = r.table.logits;
  if (!r.words.empty()) j["words"] = r.words;
  return j;
}

inline ScoreRecord score_record_from_json(const json& j, const std::string& where) {
  ScoreRecord r;
  auto& t = r.table;
  try {
    t.num_words = j.at("num_words").get<std::size_t>();
    t.max_width = j.at("k").get<std::size_t>();
    t.types = j.at("types").get<std::vector<std::string>>();
    for (const auto& s : j.at("spans")) {
      const auto pair = s.get<std::vector<std::size_t>>();
      if (pair.size() != 2) throw FormatError("app", where + ": spans are [start, end] pairs");
      t.spans.push_back({pair[0], pair[1]});
    }
    t.probs = j.at("probs").get<std::vector<double>>();
    if (j.contains("logits")) t.logits = j["logits"].get<std::vector<double>>();
    if (j.contains("words")) r.words = j["words"].get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw FormatError("app", where + ": " + e.what());
  }
  if (t.probs.size() != t.spans.size() * t.types.size()) {
    throw FormatError("app", where + ": expected " + std::to_string(t.spans.size() * t.types.size()) +
                                 " probabilities, found " + std::to_string(t.probs.size()));
  }
  if (!t.logits.empty() && t.logits.size() != t.probs.size()) {
    throw FormatError("app", where + ": logits and probs differ in length");
  }
  for (double p : t.probs) {
    if (!(p > 0.0 && p < 1.0)) throw FormatError("app", where + ": probabilities must lie in (0, 1)");
  }
  for (const auto& s : t.spans) {
    if (s.start > s.end || s.end >= t.num_words || s.width() > t.max_width) {
      throw FormatError("app", where + ": span [" + std::to_string(s.start) + ", " + std::to_string(s.end) +
                                   "] is invalid for " + std::to_string(t.num_words) + " words and k=" +
                                   std::to_string(t.max_width));
    }
  }
  if (!r.words.empty() && r.words.size() != t.num_words) throw FormatError("app", where + ": words do not match num_words");
  return r;
}

inline std::vector<ScoreRecord> read_score_file(std::istream& in) {
  std::vector<ScoreRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = "line " + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("app", where + ": malformed JSON (" + e.what() + ")");
    }
    out.push_back(score_record_from_json(j, where));
  }
  return out;
}

inline std::vector<ScoreRecord> load_score_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("app", "cannot open score file '" + path + "'");
  try {
    return read_score_file(in);
  } catch (const FormatError& e) {
    throw FormatError("app", path + ": " + e.message());
  }
}

inline void write_score_file(std::ostream& out, const std::vector<ScoreRecord>& records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

}  // namespace gliner::app
