#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include "gliner/decoder.hpp"
#include "gliner/error.hpp"
#include "gliner/inference.hpp"
#include "gliner/matcher.hpp"
#include "gliner/numerics/graph.hpp"
#include "gliner/params.hpp"
#include "gliner/prompt.hpp"
#include "gliner/tokenizer.hpp"

namespace gliner {

// ------------------------------------------------------------------ labels

/// Binary supervision over (span, prompt type) pairs, row-major.
struct LabelGrid {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> labels;
  // Gold spans wider than the span cap; they have no row.
  std::size_t filtered_wide = 0;

  std::uint8_t at(std::size_t span, std::size_t type) const { return labels[span * cols + type]; }
  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }
};

inline LabelGrid build_labels(const TrainingExample& example, const std::vector<std::string>& prompt_types,
                              const std::vector<SpanIndex>& spans, std::size_t max_width) {
  std::map<std::string, std::size_t> type_col;
  for (std::size_t t = 0; t < prompt_types.size(); ++t) {
    if (!type_col.emplace(normalize_text(prompt_types[t]), t).second) {
      throw ContractError("trainer", "prompt types must be distinct, '" + prompt_types[t] + "' repeats");
    }
  }
  std::map<SpanIndex, std::size_t> span_row_of;
  for (std::size_t s = 0; s < spans.size(); ++s) span_row_of.emplace(spans[s], s);

  LabelGrid grid{spans.size(), prompt_types.size(), std::vector<std::uint8_t>(spans.size() * prompt_types.size(), 0), 0};
  for (const auto& m : example.gold) {
    auto col = type_col.find(normalize_text(m.type));
    if (col == type_col.end()) {
      throw ContractError("trainer", "gold type '" + m.type + "' is missing from the prompt");
    }
    auto row = span_row_of.find(SpanIndex{m.start, m.end});
    if (row == span_row_of.end()) {
      if (m.end >= m.start && m.end - m.start + 1 > max_width) {
        ++grid.filtered_wide;
        continue;
      }
      throw ContractError("trainer", "gold span [" + std::to_string(m.start) + ", " + std::to_string(m.end) +
                                         "] is not among the enumerated spans");
    }
    grid.labels[row->second * grid.cols + col->second] = 1;
  }
  return grid;
}

// -------------------------------------------------------------------- loss

enum class Reduction { sum, mean };

/// Binary cross-entropy over all (span, type) pairs, from logits:
/// max(x, 0) − x·y + log(1 + e^−|x|). Gradient is σ(x) − y.
template <class T>
nn::Tensor<T> bce_loss(nn::Graph<T>& g, const nn::Tensor<T>& logits, const LabelGrid& labels,
                       Reduction reduction = Reduction::sum) {
  if (logits.rank() != 2 || logits.dim(0) != labels.rows || logits.dim(1) != labels.cols) {
    throw DimensionError("trainer", "logits " + nn::shape_string(logits.shape()) + " do not match the label grid");
  }
  const std::size_t n = logits.size();
  const T scale = reduction == Reduction::mean ? T(1) / T(n) : T(1);
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    const T x = logits[i];
    const T y = T(labels.labels[i]);
    total += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
  }
  auto loss = nn::Tensor<T>::scalar(total * scale);
  return g.record("bce_loss", {logits}, loss, [logits, loss, y = labels.labels, scale, n]() mutable {
    const T upstream = loss.grad()[0] * scale;
    auto dx = logits.grad_accumulator();
    for (std::size_t i = 0; i < n; ++i) dx[i] += upstream * (nn::kernels::sigmoid(logits[i]) - T(y[i]));
  });
}

// ---------------------------------------------------------------- sampling

/// Positive types followed by negatives drawn without replacement from the pool.
///
/// The negative count is round(ratio·P / (1 − ratio)) so that negatives make
/// up about `ratio` of the result; a sentence with no positives draws one
/// negative when ratio > 0. The count is capped by the pool (positives and
/// repeats removed) and by max_types (0 = no cap).
inline std::vector<std::string> sample_negative_types(const std::vector<std::string>& positives,
                                                      const std::vector<std::string>& pool, double ratio,
                                                      std::size_t max_types, nn::Rng& rng) {
  if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("trainer", "negative ratio must lie in [0, 1)");
  std::vector<std::string> out = positives;
  if (ratio == 0.0) return out;

  std::unordered_set<std::string> excluded;
  for (const auto& p : positives) excluded.insert(normalize_text(p));
  std::vector<std::string> candidates;
  for (const auto& t : pool) {
    if (excluded.insert(normalize_text(t)).second) candidates.push_back(t);
  }

  const double p = static_cast<double>(positives.size());
  std::size_t wanted = positives.empty() ? 1 : static_cast<std::size_t>(std::llround(ratio * p / (1.0 - ratio)));
  if (max_types != 0) wanted = std::min(wanted, max_types > positives.size() ? max_types - positives.size() : 0);
  wanted = std::min(wanted, candidates.size());

  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < wanted; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, candidates.size() - 1);
    std::swap(candidates[i], candidates[pick(rng)]);
    out.push_back(candidates[i]);
  }
  return out;
}

/// Uniform shuffle, then drops each type with probability drop_prob. At least one type survives.
inline std::vector<std::string> shuffle_and_drop(std::vector<std::string> types, double drop_prob, nn::Rng& rng) {
  if (drop_prob < 0.0 || drop_prob >= 1.0) throw ConfigError("trainer", "drop probability must lie in [0, 1)");
  std::shuffle(types.begin(), types.end(), rng);
  if (drop_prob == 0.0 || types.empty()) return types;
  std::bernoulli_distribution drop(drop_prob);
  std::vector<std::string> kept;
  for (auto& t : types) {
    if (!drop(rng)) kept.push_back(t);
  }
  if (kept.empty()) kept.push_back(types.front());
  return kept;
}

// --------------------------------------------------------------- optimizer

struct OptimConfig {
  std::array<double, 2> base_lr{3e-4, 3e-4};  // indexed by ParamGroup
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  std::size_t total_steps = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const {
    if (total_steps == 0) throw ConfigError("trainer", "total_steps must be positive");
    if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ConfigError("trainer", "warmup_fraction must lie in [0, 1]");
    if (base_lr[0] < 0.0 || base_lr[1] < 0.0 || weight_decay < 0.0) {
      throw ConfigError("trainer", "learning rates and weight decay must be non-negative");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0 || !(eps > 0.0)) {
      throw ConfigError("trainer", "invalid AdamW betas or epsilon");
    }
  }
};

struct OptimState {
  OptimConfig config;
  std::size_t step = 0;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;

  std::size_t warmup_steps() const {
    if (config.warmup_fraction == 0.0) return 0;
    const auto w = static_cast<std::size_t>(std::llround(config.warmup_fraction * double(config.total_steps)));
    return std::clamp<std::size_t>(w, 1, config.total_steps);
  }
};

template <class T>
OptimState make_optim_state(const ModelParams<T>& params, const OptimConfig& config) {
  config.validate();
  OptimState state{config, 0, {}, {}};
  for (const auto& e : params.entries()) {
    state.first_moment.emplace_back(e.tensor.size(), 0.0);
    state.second_moment.emplace_back(e.tensor.size(), 0.0);
  }
  return state;
}

/// Linear warmup from 0 to the base rate, then cosine decay to 0 at total_steps.
inline double lr_at(std::size_t step, const OptimState& state, ParamGroup group) {
  const auto& c = state.config;
  if (step > c.total_steps) {
    throw ContractError("trainer", "step " + std::to_string(step) + " is past the schedule end " +
                                       std::to_string(c.total_steps));
  }
  const double base = c.base_lr[static_cast<std::size_t>(group)];
  const std::size_t warm = state.warmup_steps();
  if (step < warm) return base * double(step) / double(warm);
  if (warm == c.total_steps) return base;
  const double progress = double(step - warm) / double(c.total_steps - warm);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

/// One AdamW update with bias correction and decoupled weight decay.
/// Advances the step counter and uses lr_at(new step).
template <class T>
void adamw_step(ModelParams<T>& params, OptimState& state) {
  auto& entries = params.entries();
  if (state.first_moment.size() != entries.size()) throw ContractError("trainer", "optimizer state does not match parameters");
  for (const auto& e : entries) {
    if (!e.tensor.has_grad()) throw ContractError("trainer", "parameter '" + e.name + "' has no gradient");
  }
  if (state.step >= state.config.total_steps) throw ContractError("trainer", "optimizer ran past total_steps");
  ++state.step;
  const auto& c = state.config;
  const double t = double(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < entries.size(); ++k) {
    auto& e = entries[k];
    const double lr = lr_at(state.step, state, e.group);
    const double shrink = e.decay ? 1.0 - lr * c.weight_decay : 1.0;
    auto values = e.tensor.mutable_data();
    const auto grad = e.tensor.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = static_cast<double>(grad[i]);
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      const double updated = static_cast<double>(values[i]) * shrink - lr * m_hat / (std::sqrt(v_hat) + c.eps);
      values[i] = static_cast<T>(updated);
    }
  }
}

// ----------------------------------------------------------------- fitting

struct TrainConfig {
  ModelConfig model;  // vocab_size is set by fit
  std::size_t vocab_max_size = 8000;
  std::size_t vocab_min_freq = 1;
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr_backbone = 3e-4;
  double lr_heads = 3e-4;
  double weight_decay = 0.01;
  double warmup_fraction = 0.1;
  double neg_ratio = 0.5;
  double drop_prob = 0.2;
  std::size_t max_types = kDefaultMaxTypes;
  Reduction reduction = Reduction::sum;
  std::uint64_t seed = 0;
  std::size_t eval_every = 0;  // 0: evaluate only at the end (when a dev set is given)
  DecodeConfig decode;

  void validate() const {
    if (steps == 0 || batch_size == 0) throw ConfigError("trainer", "steps and batch_size must be positive");
    if (max_types == 0) throw ConfigError("trainer", "max_types must be at least 1");
    if (neg_ratio < 0.0 || neg_ratio >= 1.0) throw ConfigError("trainer", "neg_ratio must lie in [0, 1)");
    if (drop_prob < 0.0 || drop_prob >= 1.0) throw ConfigError("trainer", "drop_prob must lie in [0, 1)");
    decode.validate();
  }
};

struct StepRecord {
  std::size_t step = 0;
  double loss = 0.0;  // mean per-example loss over the batch
  double lr_backbone = 0.0;
  double lr_heads = 0.0;
};

struct EvalRecord {
  std::size_t step = 0;
  EvalReport report;
};

struct FitResult {
  Vocab vocab;
  ModelParams<float> params;
  std::vector<StepRecord> trace;
  std::vector<EvalRecord> evals;
  std::size_t filtered_wide = 0;     // gold spans dropped for exceeding the span cap
  std::size_t skipped_examples = 0;  // examples left without any prompt type
};

struct FitCallbacks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EvalRecord&)> on_eval;
  std::function<void(const std::string&)> on_warning;
};

/// Vocabulary over the training words plus every type phrase the model will see.
inline Vocab build_training_vocab(const std::vector<TrainingExample>& train, const std::vector<std::string>& extra_types,
                                  std::size_t max_size, std::size_t min_freq) {
  std::vector<std::vector<std::string>> corpus;
  for (const auto& ex : train) {
    corpus.push_back(ex.words);
    for (const auto& m : ex.gold) corpus.push_back(split_whitespace(m.type));
  }
  for (const auto& t : extra_types) corpus.push_back(split_whitespace(t));
  return build_vocab(corpus, max_size, min_freq);
}

/// Supervision for one example in one step: prompt types after sampling, and the gold kept for them.
struct StepPlan {
  std::vector<std::string> types;
  TrainingExample example;
};

inline StepPlan plan_example(const TrainingExample& example, const std::vector<std::string>& pool,
                             const TrainConfig& config, nn::Rng& rng) {
  auto types = sample_negative_types(example.positive_types(), pool, config.neg_ratio, config.max_types, rng);
  types = shuffle_and_drop(std::move(types), config.drop_prob, rng);
  if (types.size() > config.max_types) types.resize(config.max_types);

  std::unordered_set<std::string> kept;
  for (const auto& t : types) kept.insert(normalize_text(t));
  StepPlan plan{std::move(types), example};
  std::erase_if(plan.example.gold, [&](const EntityMention& m) { return !kept.count(normalize_text(m.type)); });
  return plan;
}

struct ExampleOutcome {
  double loss = 0.0;  // before grad_scale
  std::size_t filtered_wide = 0;
};

/// Forward and backward for one planned example. Gradients are scaled by grad_scale.
template <class T>
ExampleOutcome accumulate_example(ModelParams<T>& params, const Vocab& vocab, const StepPlan& plan, Reduction reduction,
                          T grad_scale, std::uint64_t dropout_seed) {
  const auto prompt = build_prompt(plan.types, plan.example.words, vocab, 0, params.config().max_positions);
  nn::Graph<T> g;
  nn::Rng rng(dropout_seed);
  auto out = score_prompt(g, params, prompt, nn::Mode::train, &rng);
  const auto labels = build_labels(plan.example, plan.types, out.spans, params.config().max_span_width);
  auto loss = bce_loss(g, out.logits, labels, reduction);
  g.backward(g.scale(loss, grad_scale));
  return {static_cast<double>(loss.item()), labels.filtered_wide};
}

/// Trains a fresh model. Deterministic for a given config.seed.
inline FitResult fit(const std::vector<TrainingExample>& train, const TrainConfig& config,
                     const std::vector<TrainingExample>* dev = nullptr, const FitCallbacks& callbacks = {}) {
  config.validate();
  if (train.empty()) throw ContractError("trainer", "training set is empty");
  for (std::size_t i = 0; i < train.size(); ++i) {
    try {
      train[i].validate();
    } catch (const Error& e) {
      throw ContractError("trainer", "training example #" + std::to_string(i) + ": " + e.what());
    }
  }

  nn::Rng rng(config.seed);
  std::vector<std::string> eval_types = type_inventory(train);
  if (dev) {
    for (const auto& t : type_inventory(*dev)) {
      if (std::find(eval_types.begin(), eval_types.end(), t) == eval_types.end()) eval_types.push_back(t);
    }
  }

  FitResult result{build_training_vocab(train, eval_types, config.vocab_max_size, config.vocab_min_freq), {}, {}, {}, 0, 0};
  ModelConfig model_config = config.model;
  model_config.vocab_size = result.vocab.size();
  result.params = ModelParams<float>::init(model_config, rng());

  OptimConfig optim;
  optim.base_lr = {config.lr_backbone, config.lr_heads};
  optim.weight_decay = config.weight_decay;
  optim.warmup_fraction = config.warmup_fraction;
  optim.total_steps = config.steps;
  auto state = make_optim_state(result.params, optim);

  const std::size_t batch = std::min(config.batch_size, train.size());
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = train.size();

  auto run_eval = [&](std::size_t step) {
    if (!dev || dev->empty()) return;
    result.params.set_requires_grad(false);
    EvalRecord rec{step, evaluate_model(result.params, result.vocab, *dev, eval_types, config.decode, config.max_types)};
    if (callbacks.on_eval) callbacks.on_eval(rec);
    result.evals.push_back(std::move(rec));
  };

  for (std::size_t step = 1; step <= config.steps; ++step) {
    if (cursor + batch > train.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::vector<std::size_t> members(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                           order.begin() + static_cast<std::ptrdiff_t>(cursor + batch));
    cursor += batch;

    result.params.set_requires_grad(true);
    result.params.zero_grad();
    double loss_total = 0.0;
    for (std::size_t b = 0; b < members.size(); ++b) {
      const auto& example = train[members[b]];
      std::vector<std::string> pool;
      for (std::size_t o = 0; o < members.size(); ++o) {
        if (o == b) continue;
        for (auto& t : train[members[o]].positive_types()) pool.push_back(std::move(t));
      }
      auto plan = plan_example(example, pool, config, rng);
      const std::uint64_t dropout_seed = rng();
      if (plan.types.empty()) {
        ++result.skipped_examples;
        continue;
      }
      try {
        const auto outcome = accumulate_example(result.params, result.vocab, plan, config.reduction,
                                                1.0f / static_cast<float>(members.size()), dropout_seed);
        loss_total += outcome.loss;
        if (outcome.filtered_wide != 0) {
          result.filtered_wide += outcome.filtered_wide;
          if (callbacks.on_warning) {
            callbacks.on_warning("step " + std::to_string(step) + ": " + std::to_string(outcome.filtered_wide) +
                                 " gold span(s) wider than the span cap were ignored");
          }
        }
      } catch (const Error& e) {
        const std::string id = example.id.empty() ? "#" + std::to_string(members[b]) : example.id;
        throw ContractError("trainer", "training example " + id + ": " + e.what());
      }
    }
    adamw_step(result.params, state);

    StepRecord rec{step, loss_total / double(members.size()), lr_at(step, state, ParamGroup::backbone),
                   lr_at(step, state, ParamGroup::heads)};
    if (callbacks.on_step) callbacks.on_step(rec);
    result.trace.push_back(rec);

    if (config.eval_every != 0 && step % config.eval_every == 0 && step != config.steps) run_eval(step);
  }
  run_eval(config.steps);
  result.params.set_requires_grad(false);
  for (auto& e : result.params.entries()) e.tensor.clear_grad();
  return result;
}

}  // namespace gliner
