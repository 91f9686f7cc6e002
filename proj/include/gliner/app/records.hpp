#pragma once

// JSON shapes shared by the file formats and the CLI.

#include <string>
#include <vector>

#include "json.hpp"

#include "gliner/error.hpp"
#include "gliner/evaluation.hpp"
#include "gliner/mention.hpp"
#include "gliner/params.hpp"
#include "gliner/trainer.hpp"

namespace gliner::app {

using nlohmann::json;

namespace detail {

template <class V>
void read_opt(const json& j, const char* key, V& out, const char* module) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw ConfigError(module, std::string("field '") + key + "': " + e.what());
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known, const char* section) {
  for (const auto& [key, value] : j.items()) {
    bool found = false;
    for (const char* k : known) found = found || key == k;
    if (!found) throw ConfigError("app", std::string("unknown key '") + key + "' in " + section);
  }
}

}  // namespace detail

inline json to_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},
          {"depth", c.depth},
          {"width", c.width},
          {"heads", c.heads},
          {"ffn_mult", c.ffn_mult},
          {"max_positions", c.max_positions},
          {"dropout", c.dropout},
          {"head_dropout", c.head_dropout},
          {"max_span_width", c.max_span_width},
          {"layer_norm_eps", c.layer_norm_eps}};
}

inline ModelConfig model_config_from_json(const json& j, ModelConfig c = {}) {
  if (!j.is_object()) throw ConfigError("app", "model config must be an object");
  detail::reject_unknown(j,
                         {"vocab_size", "depth", "width", "heads", "ffn_mult", "max_positions", "dropout",
                          "head_dropout", "max_span_width", "layer_norm_eps"},
                         "model config");
  detail::read_opt(j, "vocab_size", c.vocab_size, "app");
  detail::read_opt(j, "depth", c.depth, "app");
  detail::read_opt(j, "width", c.width, "app");
  detail::read_opt(j, "heads", c.heads, "app");
  detail::read_opt(j, "ffn_mult", c.ffn_mult, "app");
  detail::read_opt(j, "max_positions", c.max_positions, "app");
  detail::read_opt(j, "dropout", c.dropout, "app");
  detail::read_opt(j, "head_dropout", c.head_dropout, "app");
  detail::read_opt(j, "max_span_width", c.max_span_width, "app");
  detail::read_opt(j, "layer_norm_eps", c.layer_norm_eps, "app");
  return c;
}

inline std::string to_string(DecodeMode m) { return m == DecodeMode::flat ? "flat" : "nested"; }

inline DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "flat") return DecodeMode::flat;
  if (s == "nested") return DecodeMode::nested;
  throw ConfigError("decoder", "mode must be 'flat' or 'nested', got '" + s + "'");
}

/// Training configuration file plus the data paths it names.
struct RunConfig {
  TrainConfig train;
  std::string train_path;
  std::string dev_path;
  std::string out_path;
};

/// Reads the training config file: {"model": {...}, "train": {...}, "paths": {...}}.
inline RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("app", "config must be a JSON object");
  detail::reject_unknown(j, {"model", "train", "paths"}, "config");
  RunConfig rc;
  auto& t = rc.train;
  if (j.contains("model")) t.model = model_config_from_json(j.at("model"), t.model);
  if (j.contains("train")) {
    const auto& s = j.at("train");
    detail::reject_unknown(s,
                           {"vocab_max_size", "vocab_min_freq", "steps", "batch_size", "lr_backbone", "lr_heads",
                            "weight_decay", "warmup_fraction", "neg_ratio", "drop_prob", "max_types", "reduction",
                            "seed", "eval_every", "mode", "threshold"},
                           "train section");
    detail::read_opt(s, "vocab_max_size", t.vocab_max_size, "app");
    detail::read_opt(s, "vocab_min_freq", t.vocab_min_freq, "app");
    detail::read_opt(s, "steps", t.steps, "app");
    detail::read_opt(s, "batch_size", t.batch_size, "app");
    detail::read_opt(s, "lr_backbone", t.lr_backbone, "app");
    detail::read_opt(s, "lr_heads", t.lr_heads, "app");
    detail::read_opt(s, "weight_decay", t.weight_decay, "app");
    detail::read_opt(s, "warmup_fraction", t.warmup_fraction, "app");
    detail::read_opt(s, "neg_ratio", t.neg_ratio, "app");
    detail::read_opt(s, "drop_prob", t.drop_prob, "app");
    detail::read_opt(s, "max_types", t.max_types, "app");
    detail::read_opt(s, "seed", t.seed, "app");
    detail::read_opt(s, "eval_every", t.eval_every, "app");
    detail::read_opt(s, "threshold", t.decode.threshold, "app");
    std::string reduction = t.reduction == Reduction::sum ? "sum" : "mean";
    detail::read_opt(s, "reduction", reduction, "app");
    if (reduction != "sum" && reduction != "mean") throw ConfigError("app", "reduction must be 'sum' or 'mean'");
    t.reduction = reduction == "sum" ? Reduction::sum : Reduction::mean;
    std::string mode = to_string(t.decode.mode);
    detail::read_opt(s, "mode", mode, "app");
    t.decode.mode = decode_mode_from_string(mode);
  }
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    detail::reject_unknown(p, {"train", "dev", "out"}, "paths section");
    detail::read_opt(p, "train", rc.train_path, "app");
    detail::read_opt(p, "dev", rc.dev_path, "app");
    detail::read_opt(p, "out", rc.out_path, "app");
  }
  return rc;
}

inline json to_json(const PrfCounts& c) {
  return {{"tp", c.tp},           {"fp", c.fp},         {"fn", c.fn},
          {"precision", c.precision()}, {"recall", c.recall()}, {"f1", c.f1()}};
}

inline json to_json(const EvalReport& r) {
  json j = to_json(r.micro);
  json per_type = json::object();
  for (const auto& [type, c] : r.per_type) per_type[type] = to_json(c);
  j["per_type"] = per_type;
  return j;
}

inline json to_json(const StepRecord& r) {
  return {{"kind", "step"}, {"step", r.step}, {"loss", r.loss}, {"lr_backbone", r.lr_backbone}, {"lr_heads", r.lr_heads}};
}

inline json to_json(const EvalRecord& r) {
  json j = to_json(r.report);
  j["kind"] = "eval";
  j["step"] = r.step;
  return j;
}

}  // namespace gliner::app
