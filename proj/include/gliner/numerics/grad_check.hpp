#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/numerics/graph.hpp"
#include "gliner/numerics/tensor.hpp"

namespace gliner::nn {

struct GradCheckOptions {
  double eps = 1e-5;
  double tolerance = 1e-3;
  // Denominator floor of the relative error, so that gradients that are
  // zero up to rounding do not produce spurious ratios.
  double abs_floor = 1e-6;
  // 0 checks every element; otherwise a seeded sample per tensor, half drawn
  // from elements with a nonzero analytic gradient.
  std::size_t max_elements_per_param = 0;
  std::uint64_t seed = 0;
  // Five-point stencil (error O(eps⁴)) instead of the two-point central difference.
  bool fourth_order = false;
  // When a perturbation flips a relu, the step is divided by 10 up to this many times.
  int max_step_reductions = 4;
};

struct ParamCheck {
  std::string name;
  std::size_t checked = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Elements whose every step still crossed a relu kink; not compared.
  std::size_t kinked = 0;
};

struct GradCheckReport {
  std::vector<ParamCheck> params;
  // A relu input sat within 10·eps of its kink at the base point.
  bool kink_flagged = false;
  double relu_margin = std::numeric_limits<double>::infinity();

  std::size_t kinked() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.kinked;
    return n;
  }

  double max_rel_error() const {
    double worst = 0.0;
    for (const auto& p : params) worst = std::max(worst, p.max_rel_error);
    return worst;
  }
  bool passed(double tolerance) const { return max_rel_error() < tolerance; }
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares reverse-mode gradients in precision T against central differences.
///
/// `f` is called as f(Graph<S>&, const std::vector<Tensor<S>>&) for S = T
/// (analytic pass) and S = double (difference oracle), so a generic lambda
/// works. The oracle always runs in double on a promoted copy of the
/// parameters; for T = float this isolates the float gradient's own error
/// from float cancellation in the differences.
template <class T, class F>
GradCheckReport grad_check(F&& f, std::vector<Tensor<T>> params, const std::vector<std::string>& names,
                           const GradCheckOptions& opts) {
  if (opts.eps <= 0.0) throw ContractError("numerics", "grad_check step must be positive");
  if (names.size() != params.size()) throw ContractError("numerics", "grad_check needs one name per parameter");

  GradCheckReport report;
  {
    Graph<T> graph;
    for (auto& p : params) {
      p.set_requires_grad(true);
      p.zero_grad();
    }
    Tensor<T> loss = f(graph, params);
    if (graph.stochastic()) throw ContractError("numerics", "grad_check requires a deterministic function (dropout is on)");
    graph.backward(loss);
    report.relu_margin = static_cast<double>(graph.min_relu_margin());
    report.kink_flagged = report.relu_margin < 10.0 * opts.eps;
  }

  std::vector<Tensor<double>> probe;
  probe.reserve(params.size());
  for (const auto& p : params) probe.push_back(p.template cast<double>());

  struct Probe {
    double value;
    std::vector<bool> relu_pattern;
  };
  auto evaluate = [&]() {
    Graph<double> graph;
    const double value = f(graph, probe).item();
    return Probe{value, graph.relu_pattern()};
  };
  const Probe base = evaluate();
  if (evaluate().value != base.value) throw ContractError("numerics", "grad_check function is not deterministic");

  Rng rng(opts.seed);
  for (std::size_t t = 0; t < params.size(); ++t) {
    const auto grad = params[t].grad();
    const std::size_t n = params[t].size();

    std::vector<std::size_t> chosen(n);
    std::iota(chosen.begin(), chosen.end(), std::size_t{0});
    const std::size_t budget = opts.max_elements_per_param;
    if (budget != 0 && n > budget) {
      std::vector<std::size_t> live, dead;
      for (std::size_t i = 0; i < n; ++i) (grad[i] != T(0) ? live : dead).push_back(i);
      std::shuffle(live.begin(), live.end(), rng);
      std::shuffle(dead.begin(), dead.end(), rng);
      std::size_t from_live = std::min(live.size(), std::max(budget / 2, budget - std::min(budget, dead.size())));
      chosen.assign(live.begin(), live.begin() + static_cast<std::ptrdiff_t>(from_live));
      chosen.insert(chosen.end(), dead.begin(),
                    dead.begin() + static_cast<std::ptrdiff_t>(std::min(dead.size(), budget - from_live)));
      std::sort(chosen.begin(), chosen.end());
    }

    ParamCheck check{names[t], chosen.size()};
    auto values = probe[t].mutable_data();
    bool recorded = false;
    for (auto i : chosen) {
      const double saved = values[i];
      double step = opts.eps;
      double numeric = 0.0;
      bool smooth = false;
      auto at = [&](double offset) {
        values[i] = saved + offset;
        Probe p = evaluate();
        smooth = smooth && p.relu_pattern == base.relu_pattern;
        return p.value;
      };
      for (int attempt = 0; attempt <= opts.max_step_reductions && !smooth; ++attempt, step /= 10.0) {
        smooth = true;
        if (opts.fourth_order) {
          numeric = (at(-2 * step) - 8 * at(-step) + 8 * at(step) - at(2 * step)) / (12.0 * step);
        } else {
          numeric = (at(step) - at(-step)) / (2.0 * step);
        }
      }
      values[i] = saved;
      if (!smooth) {
        ++check.kinked;
        continue;
      }
      const double analytic = static_cast<double>(grad[i]);
      const double err = relative_error(analytic, numeric, opts.abs_floor);
      if (!recorded || err > check.max_rel_error) {
        recorded = true;
        check.max_rel_error = err;
        check.worst_index = i;
        check.analytic = analytic;
        check.numeric = numeric;
      }
    }
    report.params.push_back(check);
  }
  return report;
}

}  // namespace gliner::nn
