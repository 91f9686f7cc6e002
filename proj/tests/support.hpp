#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "gliner/numerics/graph.hpp"

namespace gliner::testing {

template <class T>
nn::Tensor<T> randn(nn::Shape shape, std::uint64_t seed, double stddev = 1.0, bool requires_grad = true) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(nn::shape_size(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return nn::Tensor<T>(std::move(shape), std::move(v), requires_grad);
}

// Independent central-difference oracle: perturbs one input element at a time
// and re-runs `f` in double. Returns the worst |a-n| / max(|a|, |n|, floor).
inline double max_fd_error(const std::function<nn::Tensor<double>(nn::Graph<double>&, std::vector<nn::Tensor<double>>&)>& f,
                           std::vector<nn::Tensor<double>> inputs, double eps = 1e-6, double floor = 1e-8) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    nn::Graph<double> g;
    g.backward(f(g, inputs));
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + eps;
      double up, down;
      {
        nn::Graph<double> g;
        up = f(g, inputs).item();
      }
      values[i] = saved - eps;
      {
        nn::Graph<double> g;
        down = f(g, inputs).item();
      }
      values[i] = saved;
      const double numeric = (up - down) / (2 * eps);
      worst = std::max(worst, std::abs(analytic[i] - numeric) /
                                  std::max({std::abs(analytic[i]), std::abs(numeric), floor}));
    }
  }
  return worst;
}

// Scalar readout with distinct weights per element, so every output element matters.
template <class T>
nn::Tensor<T> weighted_sum(nn::Graph<T>& g, const nn::Tensor<T>& x, std::uint64_t seed = 99) {
  auto w = randn<T>(x.shape(), seed, 1.0, false);
  return g.sum(g.mul(x, w));
}

}  // namespace gliner::testing
