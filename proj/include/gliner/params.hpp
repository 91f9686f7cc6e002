#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/numerics/tensor.hpp"

namespace gliner {

/// Structural hyperparameters of the encoder and the matching heads.
struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t depth = 2;
  std::size_t width = 64;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t max_positions = 512;
  double dropout = 0.1;       // inside the encoder
  double head_dropout = 0.4;  // entity and span heads
  std::size_t max_span_width = 12;
  double layer_norm_eps = 1e-5;

  void validate() const {
    if (vocab_size < 5) throw ConfigError("encoder", "vocab_size must cover the special tokens plus one unit");
    if (depth == 0 || width == 0 || heads == 0 || ffn_mult == 0 || max_positions == 0) {
      throw ConfigError("encoder", "depth, width, heads, ffn_mult and max_positions must be positive");
    }
    if (width % heads != 0) {
      throw ConfigError("encoder", "width " + std::to_string(width) + " is not divisible by " +
                                       std::to_string(heads) + " heads");
    }
    if (dropout < 0.0 || dropout >= 1.0 || head_dropout < 0.0 || head_dropout >= 1.0) {
      throw ConfigError("encoder", "dropout probabilities must lie in [0, 1)");
    }
    if (max_span_width == 0) throw ConfigError("matcher", "max_span_width must be at least 1");
    if (!(layer_norm_eps > 0.0)) throw ConfigError("encoder", "layer_norm_eps must be positive");
  }
};

// The optimizer gives each group its own base learning rate.
enum class ParamGroup { backbone, heads };

struct ParamSpec {
  std::string name;
  nn::Shape shape;
  ParamGroup group;
  bool decay;  // subject to weight decay
  enum class Init { embedding, linear, linear_residual, linear_head_out, zeros, ones } init;
  std::size_t fan_in = 1;
};

/// Canonical ordered parameter list. Checkpoints store tensors in this order.
inline std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  using I = ParamSpec::Init;
  const std::size_t d = c.width, f = c.width * c.ffn_mult;
  std::vector<ParamSpec> specs;
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t out, ParamGroup g, I init) {
    specs.push_back({prefix + ".weight", {in, out}, g, true, init, in});
    specs.push_back({prefix + ".bias", {out}, g, false, I::zeros});
  };
  auto norm = [&](const std::string& prefix, ParamGroup g) {
    specs.push_back({prefix + ".gamma", {d}, g, false, I::ones});
    specs.push_back({prefix + ".beta", {d}, g, false, I::zeros});
  };
  const auto bb = ParamGroup::backbone;
  specs.push_back({"embed.token", {c.vocab_size, d}, bb, true, I::embedding});
  specs.push_back({"embed.position", {c.max_positions, d}, bb, true, I::embedding});
  for (std::size_t l = 0; l < c.depth; ++l) {
    const std::string p = "encoder." + std::to_string(l);
    norm(p + ".attn_norm", bb);
    linear(p + ".attn.query", d, d, bb, I::linear);
    linear(p + ".attn.key", d, d, bb, I::linear);
    linear(p + ".attn.value", d, d, bb, I::linear);
    linear(p + ".attn.output", d, d, bb, I::linear_residual);
    norm(p + ".ffn_norm", bb);
    linear(p + ".ffn.in", d, f, bb, I::linear);
    linear(p + ".ffn.out", f, d, bb, I::linear_residual);
  }
  norm("encoder.final_norm", bb);
  const auto hd = ParamGroup::heads;
  linear("entity_head.in", d, d, hd, I::linear);
  linear("entity_head.out", d, d, hd, I::linear_head_out);
  linear("span_head.in", 2 * d, d, hd, I::linear);
  linear("span_head.out", d, d, hd, I::linear_head_out);
  return specs;
}

/// All learnable tensors of a model, keyed by name, in canonical order.
template <class T>
class ModelParams {
 public:
  struct Entry {
    std::string name;
    nn::Tensor<T> tensor;
    ParamGroup group;
    bool decay;
  };

  ModelParams() = default;

  static ModelParams init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    std::vector<nn::Tensor<T>> tensors;
    const double residual_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(config.depth));
    for (const auto& spec : param_specs(config)) {
      const std::size_t n = nn::shape_size(spec.shape);
      std::vector<T> values(n, T(0));
      double stddev = 0.0;
      using I = ParamSpec::Init;
      switch (spec.init) {
        case I::embedding: stddev = 0.1; break;
        case I::linear: stddev = 1.0 / std::sqrt(static_cast<double>(spec.fan_in)); break;
        case I::linear_residual: stddev = residual_scale / std::sqrt(static_cast<double>(spec.fan_in)); break;
        case I::linear_head_out: stddev = 0.5 / std::sqrt(static_cast<double>(spec.fan_in)); break;
        case I::ones: std::fill(values.begin(), values.end(), T(1)); break;
        case I::zeros: break;
      }
      if (stddev > 0.0) {
        std::normal_distribution<double> dist(0.0, stddev);
        for (auto& v : values) v = static_cast<T>(dist(rng));
      }
      tensors.emplace_back(spec.shape, std::move(values));
    }
    return from_tensors(config, std::move(tensors));
  }

  /// Adopts tensors given in param_specs order; shapes must match exactly.
  static ModelParams from_tensors(const ModelConfig& config, std::vector<nn::Tensor<T>> tensors) {
    config.validate();
    const auto specs = param_specs(config);
    if (tensors.size() != specs.size()) {
      throw ContractError("params", "expected " + std::to_string(specs.size()) + " tensors, got " +
                                        std::to_string(tensors.size()));
    }
    ModelParams out;
    out.config_ = config;
    for (std::size_t i = 0; i < specs.size(); ++i) {
      if (tensors[i].shape() != specs[i].shape) {
        throw DimensionError("params", specs[i].name + " has shape " + nn::shape_string(tensors[i].shape()) +
                                           ", expected " + nn::shape_string(specs[i].shape));
      }
      out.index_.emplace(specs[i].name, i);
      out.entries_.push_back({specs[i].name, std::move(tensors[i]), specs[i].group, specs[i].decay});
    }
    return out;
  }

  const ModelConfig& config() const { return config_; }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  const nn::Tensor<T>& at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("params", "no parameter named '" + name + "'");
    return entries_[it->second].tensor;
  }

  std::vector<nn::Tensor<T>> tensors() const {
    std::vector<nn::Tensor<T>> out;
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }
  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  void set_requires_grad(bool on) {
    for (auto& e : entries_) e.tensor.set_requires_grad(on);
  }
  void zero_grad() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  // Deep copy in another precision, without gradients.
  template <class U>
  ModelParams<U> cast() const {
    std::vector<nn::Tensor<U>> out;
    for (const auto& e : entries_) out.push_back(e.tensor.template cast<U>());
    return ModelParams<U>::from_tensors(config_, std::move(out));
  }

  ModelParams clone() const { return cast<T>(); }

 private:
  ModelConfig config_;
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace gliner
