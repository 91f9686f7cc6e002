#pragma once

#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"

#include "gliner/error.hpp"
#include "gliner/inference.hpp"
#include "gliner/mention.hpp"

namespace gliner::app {

using nlohmann::json;

// Line-delimited records:
//   {"id": "...", "tokenized_text": ["w0", ...], "ner": [[start, end, "type"], ...]}
// Spans are inclusive word indices. "tokens" is accepted for "tokenized_text";
// an optional fourth element of a ner entry is a score.

struct LoadOptions {
  // Prediction files may repeat a triple; gold files may not.
  bool allow_duplicates = false;
};

inline TrainingExample parse_record(const std::string& line, std::size_t line_no, const LoadOptions& options = {}) {
  const std::string where = "line " + std::to_string(line_no);
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw FormatError("app", where + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw FormatError("app", where + ": record must be an object");

  TrainingExample ex;
  ex.id = j.contains("id") ? (j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump())
                           : std::to_string(line_no);
  const std::string record = where + " (record " + ex.id + ")";
  const char* words_key = j.contains("tokenized_text") ? "tokenized_text" : "tokens";
  if (!j.contains(words_key) || !j[words_key].is_array()) throw FormatError("app", record + ": missing tokenized_text");
  for (const auto& w : j[words_key]) {
    if (!w.is_string()) throw FormatError("app", record + ": words must be strings");
    ex.words.push_back(w.get<std::string>());
  }
  if (j.contains("ner")) {
    if (!j["ner"].is_array()) throw FormatError("app", record + ": ner must be a list");
    std::set<std::tuple<std::size_t, std::size_t, std::string>> seen;
    for (const auto& e : j["ner"]) {
      if (!e.is_array() || e.size() < 3 || e.size() > 4 || !e[0].is_number_integer() || !e[1].is_number_integer() ||
          !e[2].is_string()) {
        throw FormatError("app", record + ": ner entries are [start, end, \"type\"]");
      }
      const auto start = e[0].get<long long>(), end = e[1].get<long long>();
      EntityMention m;
      m.type = e[2].get<std::string>();
      if (start < 0 || end < start || static_cast<std::size_t>(end) >= ex.words.size()) {
        throw FormatError("app", record + ": span [" + std::to_string(start) + ", " + std::to_string(end) +
                                     "] is out of bounds for " + std::to_string(ex.words.size()) + " words");
      }
      if (m.type.empty()) throw FormatError("app", record + ": entity type is empty");
      m.start = static_cast<std::size_t>(start);
      m.end = static_cast<std::size_t>(end);
      if (e.size() == 4) {
        if (!e[3].is_number()) throw FormatError("app", record + ": score must be a number");
        m.score = e[3].get<double>();
      }
      if (!seen.emplace(m.start, m.end, m.type).second && !options.allow_duplicates) {
        throw FormatError("app", record + ": duplicate mention [" + std::to_string(m.start) + ", " +
                                     std::to_string(m.end) + ", " + m.type + "]");
      }
      ex.gold.push_back(std::move(m));
    }
  }
  return ex;
}

inline std::vector<TrainingExample> read_dataset(std::istream& in, const LoadOptions& options = {}) {
  std::vector<TrainingExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, line_no, options));
  }
  return out;
}

inline std::vector<TrainingExample> load_dataset(const std::string& path, const LoadOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw FormatError("app", "cannot open dataset '" + path + "'");
  try {
    return read_dataset(in, options);
  } catch (const FormatError& e) {
    throw FormatError("app", path + ": " + e.message());
  }
}

struct DatasetStats {
  std::size_t records = 0;
  std::size_t mentions = 0;
  std::size_t types = 0;
  std::size_t max_span_width = 0;
};

inline DatasetStats dataset_stats(const std::vector<TrainingExample>& examples) {
  DatasetStats s;
  s.records = examples.size();
  s.types = type_inventory(examples).size();
  for (const auto& ex : examples) {
    s.mentions += ex.gold.size();
    for (const auto& m : ex.gold) s.max_span_width = std::max(s.max_span_width, m.end - m.start + 1);
  }
  return s;
}

inline json to_record(const TrainingExample& ex, bool with_scores = false) {
  json ner = json::array();
  for (const auto& m : ex.gold) {
    json e = {m.start, m.end, m.type};
    if (with_scores) e.push_back(m.score);
    ner.push_back(std::move(e));
  }
  json j;
  if (!ex.id.empty()) j["id"] = ex.id;
  j["tokenized_text"] = ex.words;
  j["ner"] = std::move(ner);
  return j;
}

inline void write_dataset(std::ostream& out, const std::vector<TrainingExample>& examples, bool with_scores = false) {
  for (const auto& ex : examples) out << to_record(ex, with_scores).dump() << '\n';
}

inline void save_dataset(const std::string& path, const std::vector<TrainingExample>& examples,
                         bool with_scores = false) {
  std::ofstream out(path);
  if (!out) throw FormatError("app", "cannot write dataset '" + path + "'");
  write_dataset(out, examples, with_scores);
}

}  // namespace gliner::app
