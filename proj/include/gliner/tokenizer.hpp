#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <unicode/locid.h>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "gliner/error.hpp"

namespace gliner {

using TokenId = std::uint32_t;

/// NFC composition followed by lowercasing (root locale).
inline std::string normalize_text(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* nfc = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw ConfigError("tokenizer", "ICU NFC normalizer unavailable");
  icu::UnicodeString u = icu::UnicodeString::fromUTF8(icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString composed = nfc->normalize(u, status);
  composed.toLower(icu::Locale::getRoot());
  icu::UnicodeString recomposed = nfc->normalize(composed, status);
  if (U_FAILURE(status)) throw FormatError("tokenizer", "text is not valid for normalization");
  std::string out;
  recomposed.toUTF8String(out);
  return out;
}

/// Byte offsets of code point boundaries, including 0 and text.size().
inline std::vector<std::size_t> codepoint_boundaries(std::string_view text) {
  std::vector<std::size_t> bounds{0};
  const auto* s = reinterpret_cast<const std::uint8_t*>(text.data());
  const auto length = static_cast<std::int32_t>(text.size());
  std::int32_t i = 0;
  while (i < length) {
    UChar32 c;
    U8_NEXT(s, i, length, c);
    (void)c;
    bounds.push_back(static_cast<std::size_t>(i));
  }
  return bounds;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

struct WordSegmentation {
  std::string word;  // normalized
  std::vector<TokenId> subword_ids;
  // Position of the subword that represents the word. Always the first.
  static constexpr std::size_t first_index_within_word = 0;
};

class Vocab {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kEnt = "[ENT]";
  static constexpr std::string_view kSep = "[SEP]";
  static constexpr std::size_t kSpecialCount = 4;

  Vocab() : Vocab(std::vector<std::string>{}) {}

  // Units are appended after the four specials, in the given order.
  explicit Vocab(const std::vector<std::string>& units) {
    for (auto s : {kPad, kUnk, kEnt, kSep}) add(std::string(s));
    for (const auto& u : units) {
      if (u.empty()) throw ConfigError("tokenizer", "empty vocabulary unit");
      if (u.front() == '[' && u.back() == ']' && is_special_string(u)) {
        throw ConfigError("tokenizer", "unit '" + u + "' collides with a special token");
      }
      if (to_id_.count(u)) throw ConfigError("tokenizer", "duplicate vocabulary unit '" + u + "'");
      add(u);
      max_unit_bytes_ = std::max(max_unit_bytes_, u.size());
    }
  }

  /// Rebuilds from a full id→token list as stored in a checkpoint.
  static Vocab from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < kSpecialCount || tokens[0] != kPad || tokens[1] != kUnk || tokens[2] != kEnt ||
        tokens[3] != kSep) {
      throw FormatError("tokenizer", "token list does not start with the special tokens");
    }
    return Vocab(std::vector<std::string>(tokens.begin() + kSpecialCount, tokens.end()));
  }

  TokenId pad_id() const { return 0; }
  TokenId unk_id() const { return 1; }
  TokenId ent_id() const { return 2; }
  TokenId sep_id() const { return 3; }

  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::string& token(TokenId id) const { return tokens_.at(id); }

  bool contains(std::string_view unit) const { return to_id_.count(std::string(unit)) != 0; }
  TokenId id(std::string_view unit) const {
    auto it = to_id_.find(std::string(unit));
    return it == to_id_.end() ? unk_id() : it->second;
  }

  std::size_t max_unit_bytes() const { return max_unit_bytes_; }

 private:
  static bool is_special_string(std::string_view s) { return s == kPad || s == kUnk || s == kEnt || s == kSep; }

  void add(std::string token) {
    to_id_.emplace(token, static_cast<TokenId>(tokens_.size()));
    tokens_.push_back(std::move(token));
  }

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> to_id_;
  std::size_t max_unit_bytes_ = 0;
};

/// Frequency-ranked unit inventory over normalized corpus words.
///
/// Every character of the corpus is a unit candidate and takes priority over
/// whole-word units, so segmentation of corpus words never falls back to
/// [UNK] as long as the characters fit in max_size. Units are ranked by
/// frequency (descending) then byte-lexicographically; a string that is both
/// a character and a word takes the larger of its two counts.
inline Vocab build_vocab(const std::vector<std::vector<std::string>>& corpus, std::size_t max_size,
                         std::size_t min_freq = 1) {
  if (max_size < Vocab::kSpecialCount + 1) {
    throw ConfigError("tokenizer", "vocabulary max_size " + std::to_string(max_size) +
                                       " cannot hold the special tokens plus one unit");
  }
  if (corpus.empty()) throw ContractError("tokenizer", "build_vocab needs a non-empty corpus");

  std::map<std::string, std::size_t> word_freq, char_freq;
  for (const auto& sentence : corpus) {
    for (const auto& raw : sentence) {
      const std::string word = normalize_text(raw);
      if (word.empty()) continue;
      ++word_freq[word];
      const auto bounds = codepoint_boundaries(word);
      for (std::size_t b = 0; b + 1 < bounds.size(); ++b) ++char_freq[word.substr(bounds[b], bounds[b + 1] - bounds[b])];
    }
  }

  struct Candidate {
    std::string unit;
    std::size_t freq;
  };
  auto ranked = [](std::vector<Candidate>& v) {
    std::sort(v.begin(), v.end(), [](const Candidate& a, const Candidate& b) {
      return a.freq != b.freq ? a.freq > b.freq : a.unit < b.unit;
    });
  };

  std::vector<Candidate> chars, words;
  for (const auto& [c, f] : char_freq) {
    auto w = word_freq.find(c);
    chars.push_back({c, w == word_freq.end() ? f : std::max(f, w->second)});
  }
  for (const auto& [w, f] : word_freq) {
    if (f >= min_freq && !char_freq.count(w)) words.push_back({w, f});
  }
  ranked(chars);
  ranked(words);

  const std::size_t budget = max_size - Vocab::kSpecialCount;
  std::vector<Candidate> chosen(chars.begin(), chars.begin() + static_cast<std::ptrdiff_t>(std::min(budget, chars.size())));
  for (std::size_t i = 0; i < words.size() && chosen.size() < budget; ++i) chosen.push_back(words[i]);
  ranked(chosen);

  std::vector<std::string> units;
  units.reserve(chosen.size());
  for (auto& c : chosen) units.push_back(std::move(c.unit));
  return Vocab(units);
}

/// Greedy longest-match segmentation, left to right. Runs of characters that
/// no unit covers collapse into a single [UNK].
inline WordSegmentation segment(std::string_view raw_word, const Vocab& vocab) {
  WordSegmentation seg;
  seg.word = normalize_text(raw_word);
  if (seg.word.empty()) throw ContractError("tokenizer", "cannot segment an empty word");

  const auto bounds = codepoint_boundaries(seg.word);
  std::size_t b = 0;
  bool in_unknown = false;
  while (b + 1 < bounds.size()) {
    std::size_t match_end = 0;
    for (std::size_t e = bounds.size() - 1; e > b; --e) {
      const std::size_t len = bounds[e] - bounds[b];
      if (len > vocab.max_unit_bytes()) continue;
      if (vocab.contains(std::string_view(seg.word).substr(bounds[b], len))) {
        match_end = e;
        break;
      }
    }
    if (match_end == 0) {
      if (!in_unknown) seg.subword_ids.push_back(vocab.unk_id());
      in_unknown = true;
      ++b;
      continue;
    }
    seg.subword_ids.push_back(vocab.id(std::string_view(seg.word).substr(bounds[b], bounds[match_end] - bounds[b])));
    in_unknown = false;
    b = match_end;
  }
  return seg;
}

}  // namespace gliner
