#include <gtest/gtest.h>

#include <chrono>
#include <random>

#include "gliner/decoder.hpp"

using namespace gliner;

namespace {

struct Cand {
  std::size_t start, end;
  std::string type;
  double score;
};

ScoreTable table_with(std::size_t n, std::size_t k, const std::vector<std::string>& types,
                      const std::vector<Cand>& cands, double background = 0.1) {
  ScoreTable t;
  t.num_words = n;
  t.max_width = k;
  t.spans = enumerate_spans(n, k);
  t.types = types;
  t.probs.assign(t.spans.size() * types.size(), background);
  for (const auto& c : cands) {
    const auto row = span_row({c.start, c.end}, n, k);
    const auto col = static_cast<std::size_t>(std::find(types.begin(), types.end(), c.type) - types.begin());
    t.probs[row * types.size() + col] = c.score;
  }
  return t;
}

using Triple = std::tuple<std::size_t, std::size_t, std::string>;

std::vector<Triple> triples(const std::vector<EntityMention>& ms) {
  std::vector<Triple> out;
  for (const auto& m : ms) out.emplace_back(m.start, m.end, m.type);
  return out;
}

// Brute-force reference: full sort, then a linear scan against every kept span.
std::vector<EntityMention> oracle(const ScoreTable& t, DecodeMode mode, double threshold) {
  std::vector<EntityMention> all;
  for (std::size_t s = 0; s < t.spans.size(); ++s)
    for (std::size_t c = 0; c < t.types.size(); ++c)
      if (t.prob(s, c) > threshold) all.push_back({t.spans[s].start, t.spans[s].end, t.types[c], t.prob(s, c)});
  std::sort(all.begin(), all.end(), [](const EntityMention& a, const EntityMention& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.start != b.start) return a.start < b.start;
    if (a.end != b.end) return a.end < b.end;
    return a.type < b.type;
  });
  std::vector<EntityMention> kept;
  for (const auto& c : all) {
    bool ok = true;
    for (const auto& k : kept) {
      const bool disjoint = c.end < k.start || k.end < c.start;
      const bool same = c.start == k.start && c.end == k.end;
      const bool nested = !same && ((k.start <= c.start && c.end <= k.end) || (c.start <= k.start && k.end <= c.end));
      ok = ok && (disjoint || (mode == DecodeMode::nested && nested));
    }
    if (ok) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

ScoreTable random_table(std::mt19937_64& rng, std::size_t n, std::size_t k, std::size_t m) {
  ScoreTable t;
  t.num_words = n;
  t.max_width = k;
  t.spans = enumerate_spans(n, k);
  for (std::size_t i = 0; i < m; ++i) t.types.push_back(std::string(1, static_cast<char>('A' + i)));
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (std::size_t i = 0; i < t.spans.size() * m; ++i) {
    // Coarse grid so that exact score ties are frequent.
    t.probs.push_back(rng() % 3 == 0 ? std::round(u(rng) * 10) / 10 + 0.001 : u(rng));
  }
  return t;
}

}  // namespace

TEST(Decode, FlatHandExample) {
  const auto t = table_with(6, 4, {"A", "B", "C"}, {{0, 2, "A", 0.9}, {1, 3, "B", 0.8}, {4, 5, "C", 0.6}});
  EXPECT_EQ(triples(decode(t, {DecodeMode::flat, 0.5})), (std::vector<Triple>{{0, 2, "A"}, {4, 5, "C"}}));
}

TEST(Decode, NestedHandExample) {
  const auto t = table_with(5, 4, {"A", "B", "C"}, {{0, 3, "A", 0.9}, {1, 2, "B", 0.8}, {2, 4, "C", 0.7}});
  EXPECT_EQ(triples(decode(t, {DecodeMode::nested, 0.5})), (std::vector<Triple>{{0, 3, "A"}, {1, 2, "B"}}));
  EXPECT_EQ(triples(decode(t, {DecodeMode::flat, 0.5})), (std::vector<Triple>{{0, 3, "A"}}));
}

TEST(Decode, NothingAboveThreshold) {
  const auto t = table_with(4, 2, {"A"}, {{0, 1, "A", 0.5}}, 0.3);
  EXPECT_TRUE(decode(t, {DecodeMode::flat, 0.5}).empty());
  EXPECT_TRUE(decode(t, {DecodeMode::nested, 0.5}).empty());
  EXPECT_EQ(decode(t, {DecodeMode::flat, 0.4}).size(), 1u);  // strict comparison
}

TEST(Decode, EqualScoresOnOneSpanKeepTheSmallerType) {
  const auto t = table_with(2, 2, {"B", "A"}, {{0, 0, "A", 0.7}, {0, 0, "B", 0.7}});
  for (auto mode : {DecodeMode::flat, DecodeMode::nested}) {
    EXPECT_EQ(triples(decode(t, {mode, 0.5})), (std::vector<Triple>{{0, 0, "A"}}));
  }
  DecodeConfig multi{DecodeMode::flat, 0.5, true};
  EXPECT_EQ(decode(t, multi).size(), 2u);
}

TEST(Decode, TiesBreakOnStartThenEnd) {
  const auto t = table_with(4, 4, {"A"}, {{1, 2, "A", 0.8}, {0, 1, "A", 0.8}, {0, 2, "A", 0.8}});
  EXPECT_EQ(triples(decode(t, {DecodeMode::flat, 0.5})), (std::vector<Triple>{{0, 1, "A"}}));
}

TEST(Decode, ScoresAreCarriedThrough) {
  const auto t = table_with(3, 2, {"A"}, {{1, 2, "A", 0.77}});
  const auto out = decode(t, {DecodeMode::flat, 0.5});
  ASSERT_EQ(out.size(), 1u);
  EXPECT_EQ(out[0].score, 0.77);
}

TEST(Decode, InvalidInputs) {
  auto t = table_with(3, 2, {"A"}, {});
  EXPECT_THROW(decode(t, {DecodeMode::flat, 0.0}), ConfigError);
  EXPECT_THROW(decode(t, {DecodeMode::flat, 1.0}), ConfigError);
  t.probs.pop_back();
  EXPECT_THROW(decode(t, {DecodeMode::flat, 0.5}), ContractError);
}

TEST(Decode, MatchesBruteForceOracle) {
  std::mt19937_64 rng(11);
  int checked = 0;
  while (checked < 2000) {
    const std::size_t n = 1 + rng() % 8, k = 1 + rng() % 4, m = 1 + rng() % 3;
    if (span_count(n, k) * m > 40) continue;
    const auto t = random_table(rng, n, k, m);
    for (auto mode : {DecodeMode::flat, DecodeMode::nested}) {
      for (double threshold : {0.3, 0.5, 0.7}) {
        DecodeStats stats;
        const auto got = decode(t, {mode, threshold}, &stats);
        const auto want = oracle(t, mode, threshold);
        ASSERT_EQ(triples(got), triples(want));
        EXPECT_LE(stats.pops, stats.candidates);
      }
    }
    ++checked;
  }
}

TEST(Decode, OutputInvariants) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const auto t = random_table(rng, 2 + rng() % 15, 1 + rng() % 6, 1 + rng() % 4);
    const auto flat = decode(t, {DecodeMode::flat, 0.5});
    const auto nested = decode(t, {DecodeMode::nested, 0.5});
    for (const auto* out : {&flat, &nested}) {
      for (const auto& m : *out) EXPECT_GT(m.score, 0.5);
      EXPECT_TRUE(std::is_sorted(out->begin(), out->end()));
    }
    for (std::size_t i = 0; i < flat.size(); ++i) {
      for (std::size_t j = i + 1; j < flat.size(); ++j) {
        EXPECT_TRUE(flat[i].end < flat[j].start || flat[j].end < flat[i].start);
        // flat output is feasible under the nested rule
        EXPECT_TRUE(compatible(flat[i], flat[j], {DecodeMode::nested, 0.5}));
      }
    }
    for (std::size_t i = 0; i < nested.size(); ++i) {
      for (std::size_t j = i + 1; j < nested.size(); ++j) {
        const auto& a = nested[i];
        const auto& b = nested[j];
        const bool disjoint = a.end < b.start || b.end < a.start;
        const bool proper = !(a.start == b.start && a.end == b.end) &&
                            ((a.start <= b.start && b.end <= a.end) || (b.start <= a.start && a.end <= b.end));
        EXPECT_TRUE(disjoint || proper);
      }
    }
    EXPECT_EQ(triples(decode(t, {DecodeMode::flat, 0.5})), triples(flat));
  }
}

TEST(Decode, CompatibilityPredicate) {
  const DecodeConfig flat{DecodeMode::flat, 0.5};
  const DecodeConfig nested{DecodeMode::nested, 0.5};
  const EntityMention outer{0, 3, "A", 0.9};
  EXPECT_TRUE(compatible({4, 5, "B", 0.8}, outer, flat));
  EXPECT_FALSE(compatible({1, 2, "B", 0.8}, outer, flat));
  EXPECT_TRUE(compatible({1, 2, "B", 0.8}, outer, nested));
  EXPECT_TRUE(compatible({0, 2, "B", 0.8}, outer, nested));  // shares one endpoint
  EXPECT_TRUE(compatible({0, 5, "B", 0.8}, outer, nested));  // contains
  EXPECT_FALSE(compatible({2, 4, "B", 0.8}, outer, nested));
  EXPECT_FALSE(compatible({0, 3, "B", 0.8}, outer, nested));
}

TEST(Decode, PopsNeverExceedCandidatesAtScale) {
  std::mt19937_64 rng(13);
  ScoreTable t;
  t.num_words = 400;
  t.max_width = 12;
  t.spans = enumerate_spans(400, 12);
  t.types = {"A", "B", "C"};
  std::uniform_real_distribution<double> u(0.5001, 0.9999);
  for (std::size_t i = 0; i < t.spans.size() * 3; ++i) t.probs.push_back(u(rng));
  for (auto mode : {DecodeMode::flat, DecodeMode::nested}) {
    DecodeStats stats;
    const auto out = decode(t, {mode, 0.5}, &stats);
    EXPECT_EQ(stats.candidates, t.probs.size());
    EXPECT_LE(stats.pops, stats.candidates);
    EXPECT_FALSE(out.empty());
  }
}
