#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gliner/inference.hpp"
#include "gliner/matcher.hpp"
#include "gliner/numerics/grad_check.hpp"
#include "gliner/params.hpp"
#include "gliner/prompt.hpp"
#include "gliner/trainer.hpp"

namespace gliner {

/// A fixed labelled sentence for gradient checks on the full model.
inline TrainingExample gradcheck_example() {
  TrainingExample ex;
  ex.id = "gradcheck";
  ex.words = {"Alain", "Farley", "works", "at", "McGill", "University", "in", "Montreal"};
  ex.gold = {{0, 1, "person", 1.0}, {4, 5, "organization", 1.0}, {7, 7, "location", 1.0}};
  return ex;
}

/// Defaults: five-point stencil with step 1e-3, gradients under 1e-2 in
/// magnitude compared in absolute terms, 16 sampled elements per tensor.
inline nn::GradCheckOptions default_model_check() {
  nn::GradCheckOptions o;
  o.eps = 1e-3;
  o.fourth_order = true;
  o.abs_floor = 1e-2;
  o.max_elements_per_param = 16;
  return o;
}

struct ModelCheckOptions {
  ModelConfig model;  // vocab_size is taken from the check vocabulary
  nn::GradCheckOptions check = default_model_check();
  std::uint64_t init_seed = 0;
};

/// Finite-difference check of every named parameter tensor of a freshly
/// initialised model, on the summed BCE loss of gradcheck_example() with
/// dropout disabled. T is the precision of the analytic pass.
template <class T>
nn::GradCheckReport check_model_gradients(const ModelCheckOptions& options) {
  const auto example = gradcheck_example();
  const std::vector<std::string> types{"person", "organization", "location", "date"};
  const Vocab vocab = build_vocab({example.words, types}, 256);

  ModelConfig config = options.model;
  config.vocab_size = vocab.size();
  const auto params = ModelParams<T>::init(config, options.init_seed);
  const auto prompt = build_prompt(types, example.words, vocab, 0, config.max_positions);

  auto loss_fn = [&](auto& g, const auto& tensors) {
    using S = typename std::decay_t<decltype(tensors)>::value_type::value_type;
    auto model = ModelParams<S>::from_tensors(config, tensors);
    auto scores = score_prompt(g, model, prompt, nn::Mode::eval, nullptr);
    const auto labels = build_labels(example, types, scores.spans, config.max_span_width);
    return bce_loss(g, scores.logits, labels, Reduction::sum);
  };
  return nn::grad_check<T>(loss_fn, params.tensors(), params.names(), options.check);
}

}  // namespace gliner
