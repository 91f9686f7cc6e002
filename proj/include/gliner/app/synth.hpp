#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gliner/error.hpp"
#include "gliner/inference.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner::app {

using nlohmann::json;

/// Slot-template generator description. Template slots are written {type}.
struct SynthSpec {
  std::map<std::string, std::vector<std::string>> fillers;  // type → surface forms
  std::vector<std::string> templates;
  std::size_t train_size = 50;
  std::size_t dev_size = 50;
  std::size_t max_span_width = 12;
};

/// Ten types, fifteen templates. "Alain Farley works at McGill University" is one of its sentences.
inline SynthSpec default_synth_spec() {
  SynthSpec s;
  s.fillers = {
      {"person", {"Alain Farley", "Maria Lopez", "John Smith", "Aiko Tanaka", "Omar Haddad", "Lena Novak"}},
      {"organization",
       {"McGill University", "Acme Corporation", "Red Cross", "Globex", "Stanford University", "World Bank"}},
      {"location", {"Paris", "Lake Geneva", "Mount Everest", "Brazil", "Tokyo", "Cape Town"}},
      {"date", {"March 3", "last Monday", "1999", "July 2020", "yesterday", "next week"}},
      {"product", {"iPhone", "Model T", "PlayStation 5", "Kindle", "Walkman", "Galaxy Tab"}},
      {"event", {"World Cup", "Olympic Games", "Cannes Festival", "Super Bowl", "Expo 2010", "Woodstock"}},
      {"disease", {"influenza", "malaria", "type 2 diabetes", "measles", "tuberculosis", "asthma"}},
      {"language", {"French", "Mandarin", "Swahili", "Portuguese", "Arabic", "Finnish"}},
      {"sport", {"tennis", "basketball", "ice hockey", "cricket", "rugby", "volleyball"}},
      {"currency", {"euros", "yen", "Swiss francs", "rupees", "pesos", "US dollars"}},
  };
  s.templates = {
      "{person} works at {organization}",
      "{person} visited {location} on {date} .",
      "{organization} launched the {product} in {date} .",
      "{person} speaks {language} fluently .",
      "The {event} was held in {location} .",
      "Doctors in {location} reported cases of {disease} .",
      "{person} plays {sport} every weekend .",
      "Prices are listed in {currency} at {organization} .",
      "{person} caught {disease} after the {event} .",
      "Fans of {sport} watched the {event} on {date} .",
      "The {product} manual is written in {language} .",
      "{organization} sponsors {sport} teams in {location} .",
      "She paid for the {product} in {currency} .",
      "Courses in {language} start {date} at {organization} .",
      "Tickets for the {event} cost forty {currency} .",
  };
  return s;
}

inline SynthSpec synth_spec_from_json(const json& j) {
  SynthSpec s;
  try {
    for (const auto& [type, forms] : j.at("types").items()) s.fillers[type] = forms.get<std::vector<std::string>>();
    s.templates = j.at("templates").get<std::vector<std::string>>();
    if (j.contains("train_size")) s.train_size = j["train_size"].get<std::size_t>();
    if (j.contains("dev_size")) s.dev_size = j["dev_size"].get<std::size_t>();
    if (j.contains("max_span_width")) s.max_span_width = j["max_span_width"].get<std::size_t>();
  } catch (const json::exception& e) {
    throw ConfigError("app", std::string("synthetic data spec: ") + e.what());
  }
  return s;
}

inline json to_json(const SynthSpec& s) {
  json types = json::object();
  for (const auto& [t, f] : s.fillers) types[t] = f;
  return {{"types", types},
          {"templates", s.templates},
          {"train_size", s.train_size},
          {"dev_size", s.dev_size},
          {"max_span_width", s.max_span_width}};
}

namespace detail {

struct TemplatePiece {
  bool slot = false;
  std::string text;  // literal word, or slot type
};

inline std::vector<TemplatePiece> parse_template(const std::string& tmpl) {
  std::vector<TemplatePiece> pieces;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    const auto open = tmpl.find('{', i);
    for (auto& w : split_whitespace(std::string_view(tmpl).substr(i, open == std::string::npos ? std::string::npos : open - i))) {
      pieces.push_back({false, std::move(w)});
    }
    if (open == std::string::npos) break;
    const auto close = tmpl.find('}', open);
    if (close == std::string::npos) throw ConfigError("app", "unclosed slot in template '" + tmpl + "'");
    const auto words = split_whitespace(std::string_view(tmpl).substr(open + 1, close - open - 1));
    std::string type;
    for (const auto& w : words) type += (type.empty() ? "" : " ") + w;
    if (type.empty()) throw ConfigError("app", "empty slot in template '" + tmpl + "'");
    pieces.push_back({true, type});
    i = close + 1;
  }
  return pieces;
}

}  // namespace detail

/// Checks that every type has forms and at least one template, and that forms fit the span cap.
inline void validate_synth_spec(const SynthSpec& spec) {
  if (spec.fillers.size() < 2) throw ConfigError("app", "synthetic data needs at least two entity types");
  if (spec.templates.empty()) throw ConfigError("app", "synthetic data needs at least one template");
  if (spec.max_span_width == 0) throw ConfigError("app", "max_span_width must be positive");
  std::map<std::string, std::size_t> slot_uses;
  for (const auto& t : spec.templates) {
    for (const auto& p : detail::parse_template(t)) {
      if (!p.slot) continue;
      if (!spec.fillers.count(p.text)) throw ConfigError("app", "template slot {" + p.text + "} names no type");
      ++slot_uses[p.text];
    }
  }
  for (const auto& [type, forms] : spec.fillers) {
    if (type.empty()) throw ConfigError("app", "entity type names must be non-empty");
    if (forms.empty()) throw ConfigError("app", "type '" + type + "' has no surface forms");
    if (!slot_uses.count(type)) throw ConfigError("app", "type '" + type + "' appears in no template");
    for (const auto& f : forms) {
      const auto n = split_whitespace(f).size();
      if (n == 0) throw ConfigError("app", "type '" + type + "' has a blank surface form");
      if (n > spec.max_span_width) {
        throw ConfigError("app", "form '" + f + "' is wider than max_span_width " + std::to_string(spec.max_span_width));
      }
    }
  }
}

/// Sentence i is drawn from a template containing type (i mod |types|), so
/// every type appears at least floor(size / |types|) times.
inline std::vector<TrainingExample> synth_dataset(const SynthSpec& spec, std::size_t size, std::uint64_t seed,
                                                  const std::string& id_prefix = "synth") {
  validate_synth_spec(spec);
  std::vector<std::string> types;
  for (const auto& [t, f] : spec.fillers) types.push_back(t);
  std::vector<std::vector<detail::TemplatePiece>> parsed;
  for (const auto& t : spec.templates) parsed.push_back(detail::parse_template(t));
  std::map<std::string, std::vector<std::size_t>> templates_with;
  for (std::size_t k = 0; k < parsed.size(); ++k) {
    for (const auto& p : parsed[k]) {
      if (!p.slot) continue;
      auto& v = templates_with[p.text];
      if (v.empty() || v.back() != k) v.push_back(k);
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<TrainingExample> out;
  out.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    const auto& choices = templates_with.at(types[i % types.size()]);
    const auto& pieces = parsed[choices[std::uniform_int_distribution<std::size_t>(0, choices.size() - 1)(rng)]];
    TrainingExample ex;
    ex.id = id_prefix + "-" + std::to_string(i);
    for (const auto& p : pieces) {
      if (!p.slot) {
        ex.words.push_back(p.text);
        continue;
      }
      const auto& forms = spec.fillers.at(p.text);
      const auto words = split_whitespace(forms[std::uniform_int_distribution<std::size_t>(0, forms.size() - 1)(rng)]);
      const std::size_t start = ex.words.size();
      ex.words.insert(ex.words.end(), words.begin(), words.end());
      ex.gold.push_back({start, ex.words.size() - 1, p.text, 1.0});
    }
    out.push_back(std::move(ex));
  }
  return out;
}

struct SynthSplits {
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> dev;
};

// The dev split uses its own stream derived from the seed.
inline SynthSplits synth_splits(const SynthSpec& spec, std::uint64_t seed) {
  std::seed_seq seq{seed, std::uint64_t{0x5eed}};
  std::uint32_t dev_seed[2];
  seq.generate(dev_seed, dev_seed + 2);
  return {synth_dataset(spec, spec.train_size, seed, "train"),
          synth_dataset(spec, spec.dev_size, (std::uint64_t(dev_seed[0]) << 32) | dev_seed[1], "dev")};
}

}  // namespace gliner::app
