#include <gtest/gtest.h>

#include "gliner/encoder.hpp"
#include "gliner/numerics/grad_check.hpp"
#include "support.hpp"

using namespace gliner;
namespace gt = gliner::testing;
using gliner::nn::Graph;
using gliner::nn::Mode;
using gliner::nn::Tensor;

namespace {

const std::vector<std::string> kWords{"Alain", "Farley", "works", "at", "McGill", "University"};
const std::vector<std::string> kTypes{"person", "organization", "location"};

Vocab small_vocab() { return build_vocab({kWords, kTypes}, 64); }

ModelConfig small_config(std::size_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  c.depth = 2;
  c.width = 16;
  c.heads = 4;
  c.max_positions = 64;
  return c;
}

template <class T>
void zero_positions(ModelParams<T>& params) {
  auto table = params.at("embed.position");
  for (auto& v : table.mutable_data()) v = T(0);
}

}  // namespace

TEST(Encoder, OutputShapesFollowThePrompt) {
  const auto vocab = small_vocab();
  const auto params = ModelParams<float>::init(small_config(vocab.size()), 1);
  for (std::size_t m = 1; m <= kTypes.size(); ++m) {
    const auto prompt = build_prompt({kTypes.begin(), kTypes.begin() + m}, kWords, vocab);
    Graph<float> g;
    const auto out = encode(g, params, prompt, Mode::eval, nullptr);
    EXPECT_EQ(out.p.shape(), (nn::Shape{m, 16}));
    EXPECT_EQ(out.h.shape(), (nn::Shape{kWords.size(), 16}));
  }
}

TEST(Encoder, RowsAreGatheredAtPromptPositions) {
  const auto vocab = small_vocab();
  const auto params = ModelParams<double>::init(small_config(vocab.size()), 2);
  const auto prompt = build_prompt(kTypes, kWords, vocab);
  Graph<double> g;
  const auto full = encode_sequence(g, params, prompt.token_ids, Mode::eval, nullptr);
  const auto out = encode(g, params, prompt, Mode::eval, nullptr);
  for (std::size_t t = 0; t < kTypes.size(); ++t)
    for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(out.p.at(t, d), full.at(prompt.ent_positions[t], d));
  for (std::size_t w = 0; w < kWords.size(); ++w)
    for (std::size_t d = 0; d < 16; ++d) EXPECT_EQ(out.h.at(w, d), full.at(prompt.word_positions[w], d));
}

TEST(Encoder, EvalModeIsBitIdentical) {
  const auto vocab = small_vocab();
  auto cfg = small_config(vocab.size());
  cfg.dropout = 0.3;
  const auto params = ModelParams<float>::init(cfg, 3);
  const auto prompt = build_prompt(kTypes, kWords, vocab);
  Graph<float> g1, g2;
  nn::Rng r1(1), r2(2);
  const auto a = encode(g1, params, prompt, Mode::eval, &r1);
  const auto b = encode(g2, params, prompt, Mode::eval, &r2);
  EXPECT_TRUE(std::equal(a.h.data().begin(), a.h.data().end(), b.h.data().begin()));
  EXPECT_TRUE(std::equal(a.p.data().begin(), a.p.data().end(), b.p.data().begin()));
}

TEST(Encoder, TrainModeIsDeterministicGivenSeed) {
  const auto vocab = small_vocab();
  auto cfg = small_config(vocab.size());
  cfg.dropout = 0.3;
  const auto params = ModelParams<float>::init(cfg, 3);
  const auto prompt = build_prompt(kTypes, kWords, vocab);
  auto run = [&](std::uint64_t seed) {
    Graph<float> g;
    nn::Rng rng(seed);
    auto h = encode(g, params, prompt, Mode::train, &rng).h;
    return std::vector<float>(h.data().begin(), h.data().end());
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Encoder, AttentionRowsSumToOne) {
  const auto vocab = small_vocab();
  const auto params = ModelParams<float>::init(small_config(vocab.size()), 4);
  const auto prompt = build_prompt(kTypes, kWords, vocab);
  Graph<float> g;
  std::vector<Tensor<float>> attention;
  encode(g, params, prompt, Mode::eval, nullptr, &attention);
  ASSERT_EQ(attention.size(), 2u * 4u);
  for (const auto& a : attention) {
    ASSERT_EQ(a.rows(), prompt.token_ids.size());
    ASSERT_EQ(a.cols(), prompt.token_ids.size());
    for (std::size_t r = 0; r < a.rows(); ++r) {
      double s = 0;
      for (std::size_t c = 0; c < a.cols(); ++c) s += a.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-5);
    }
  }
}

TEST(Encoder, TypeOrderPermutesEntityRowsWithoutPositions) {
  const auto vocab = small_vocab();
  auto params = ModelParams<double>::init(small_config(vocab.size()), 5);
  zero_positions(params);
  const std::vector<std::string> permuted{"location", "person", "organization"};
  const std::vector<std::size_t> source{2, 0, 1};  // permuted[i] == kTypes[source[i]]
  Graph<double> g;
  const auto a = encode(g, params, build_prompt(kTypes, kWords, vocab), Mode::eval, nullptr);
  const auto b = encode(g, params, build_prompt(permuted, kWords, vocab), Mode::eval, nullptr);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t d = 0; d < 16; ++d) EXPECT_NEAR(b.p.at(i, d), a.p.at(source[i], d), 1e-12);
  for (std::size_t i = 0; i < a.h.size(); ++i) EXPECT_NEAR(a.h[i], b.h[i], 1e-12);
}

TEST(Encoder, PositionsBreakTheSymmetry) {
  const auto vocab = small_vocab();
  const auto params = ModelParams<double>::init(small_config(vocab.size()), 5);
  Graph<double> g;
  const auto a = encode(g, params, build_prompt({"person", "location"}, kWords, vocab), Mode::eval, nullptr);
  const auto b = encode(g, params, build_prompt({"location", "person"}, kWords, vocab), Mode::eval, nullptr);
  EXPECT_GT(std::abs(a.p.at(0, 0) - b.p.at(1, 0)), 1e-9);
}

TEST(Encoder, TokenEmbeddingGradientMatchesFiniteDifferences) {
  const auto vocab = small_vocab();
  auto cfg = small_config(vocab.size());
  cfg.depth = 1;
  cfg.width = 8;
  cfg.heads = 2;
  const auto params = ModelParams<double>::init(cfg, 6);
  const auto prompt = build_prompt({"person", "location"}, {"Alain", "works", "at", "McGill"}, vocab);
  const auto names = params.names();
  const std::size_t token_index = 0;
  ASSERT_EQ(names[token_index], "embed.token");

  auto readout = [&](Graph<double>& g, std::vector<Tensor<double>>& in) {
    auto tensors = params.tensors();
    tensors[token_index] = in[0];
    const auto model = ModelParams<double>::from_tensors(cfg, tensors);
    return gt::weighted_sum(g, encode(g, model, prompt, Mode::eval, nullptr).h, 41);
  };
  EXPECT_LT(gt::max_fd_error(readout, {params.at("embed.token").clone()}, 1e-6, 1e-6), 1e-6);

  auto f32 = [&](auto& g, const auto& in) {
    using S = typename std::decay_t<decltype(in)>::value_type::value_type;
    auto tensors = params.template cast<S>().tensors();
    tensors[token_index] = in[0];
    const auto model = ModelParams<S>::from_tensors(cfg, tensors);
    return gt::weighted_sum(g, encode(g, model, prompt, Mode::eval, nullptr).h, 41);
  };
  nn::GradCheckOptions opts;
  opts.eps = 1e-3;
  opts.fourth_order = true;
  opts.abs_floor = 1e-2;
  const auto report = nn::grad_check<float>(f32, {params.at("embed.token").cast<float>()}, {"embed.token"}, opts);
  EXPECT_LT(report.max_rel_error(), 1e-3);
}

TEST(Encoder, Errors) {
  const auto vocab = small_vocab();
  auto cfg = small_config(vocab.size());
  cfg.max_positions = 8;
  const auto params = ModelParams<float>::init(cfg, 7);
  Graph<float> g;
  EXPECT_THROW(encode(g, params, build_prompt(kTypes, kWords, vocab), Mode::eval, nullptr), SizingError);
  const std::vector<TokenId> bad{0, static_cast<TokenId>(vocab.size())};
  EXPECT_THROW(encode_sequence(g, params, bad, Mode::eval, nullptr), ContractError);
}

TEST(ModelConfig, Validation) {
  ModelConfig c;
  c.vocab_size = 10;
  EXPECT_NO_THROW(c.validate());
  c.heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c.heads = 4;
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c.dropout = 0.1;
  c.vocab_size = 4;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ModelParams, InitIsSeededAndShapesFollowSpecs) {
  ModelConfig c;
  c.vocab_size = 20;
  const auto a = ModelParams<float>::init(c, 9);
  const auto b = ModelParams<float>::init(c, 9);
  const auto specs = param_specs(c);
  ASSERT_EQ(a.size(), specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    EXPECT_EQ(a.entries()[i].name, specs[i].name);
    EXPECT_EQ(a.entries()[i].tensor.shape(), specs[i].shape);
    EXPECT_TRUE(std::equal(a.entries()[i].tensor.data().begin(), a.entries()[i].tensor.data().end(),
                           b.entries()[i].tensor.data().begin()));
  }
  auto tensors = a.tensors();
  tensors[1] = Tensor<float>({2, 2}, {0, 0, 0, 0});
  EXPECT_THROW(ModelParams<float>::from_tensors(c, tensors), DimensionError);
  tensors.pop_back();
  EXPECT_THROW(ModelParams<float>::from_tensors(c, tensors), ContractError);
}
