#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "gliner/error.hpp"
#include "gliner/numerics/tensor.hpp"

namespace gliner::nn {

using Rng = std::mt19937_64;

namespace kernels {

// c[m×n] (+)= a[m×k] · b[k×n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m×n] (+)= a[m×k] · b[n×k]ᵀ
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      if (accumulate) {
        c[i * n + j] += acc;
      } else {
        c[i * n + j] = acc;
      }
    }
  }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
template <class T>
void gemm_tn_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* brow = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = a[i * k + p];
      T* crow = c + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace kernels

enum class Mode { train, eval };

/// Records executed operations so that gradients can be propagated in reverse.
///
/// Ops whose inputs do not require gradients are evaluated without being
/// recorded. backward() walks the record once in reverse order; gradients of
/// intermediate results are reset at the start of every pass while leaf
/// gradients accumulate, so two passes without zeroing double every leaf grad.
template <class T>
class Graph {
 public:
  struct Op {
    std::string name;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  const std::vector<Op>& ops() const { return ops_; }
  // True once a dropout with p > 0 has been recorded.
  bool stochastic() const { return stochastic_; }
  // Smallest |x| seen at any relu input; +inf when no relu ran.
  T min_relu_margin() const { return relu_margin_; }
  // Sign of every relu input, in execution order.
  const std::vector<bool>& relu_pattern() const { return relu_pattern_; }

  /// Registers a custom op. The backward closure reads output's grad and
  /// accumulates into the inputs that require grad.
  Tensor<T> record(std::string name, std::vector<Tensor<T>> inputs, Tensor<T> output, std::function<void()> backward) {
    bool any = false;
    for (const auto& in : inputs) any = any || in.requires_grad();
    if (!any) return output;
    output.set_requires_grad(true);
    ops_.push_back(Op{std::move(name), std::move(inputs), output, std::move(backward)});
    return output;
  }

  void backward(const Tensor<T>& loss) {
    if (loss.size() != 1) {
      throw ContractError("numerics", "backward needs a scalar loss, got " + shape_string(loss.shape()));
    }
    for (auto& op : ops_) op.output.zero_grad();
    Tensor<T> seed = loss;
    if (!seed.requires_grad()) return;
    seed.grad_accumulator()[0] += T(1);
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) it->backward();
  }

  // ---------------------------------------------------------------- linear

  Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false) {
    if (a.rank() != 2 || b.rank() != 2) {
      throw DimensionError("numerics", "matmul needs rank-2 operands, got " + shape_string(a.shape()) + " and " +
                                           shape_string(b.shape()));
    }
    const std::size_t m = a.dim(0), k = a.dim(1);
    const std::size_t bk = transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != bk) {
      throw DimensionError("numerics", "matmul inner dimensions disagree: " + shape_string(a.shape()) +
                                           (transpose_b ? " · transpose " : " · ") + shape_string(b.shape()));
    }
    std::vector<T> out(m * n);
    if (transpose_b) {
      kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    } else {
      kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    }
    Tensor<T> c({m, n}, std::move(out));
    return record("matmul", {a, b}, c, [a, b, c, m, k, n, transpose_b]() mutable {
      const T* dc = c.grad().data();
      if (a.requires_grad()) {
        T* da = a.grad_accumulator().data();
        if (transpose_b) {
          kernels::gemm_nn(dc, b.data().data(), da, m, n, k, true);
        } else {
          kernels::gemm_nt(dc, b.data().data(), da, m, n, k, true);
        }
      }
      if (b.requires_grad()) {
        T* db = b.grad_accumulator().data();
        if (transpose_b) {
          kernels::gemm_tn_acc(dc, a.data().data(), db, m, n, k);
        } else {
          kernels::gemm_tn_acc(a.data().data(), dc, db, m, k, n);
        }
      }
    });
  }

  // ---------------------------------------------------------- elementwise

  // b may match a's shape, be a single value, or be a row of a.cols() values.
  Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, false); }
  Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) { return binary(a, b, true); }

  Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.data().begin(), a.data().end());
    for (auto& v : out) v *= factor;
    Tensor<T> c(a.shape(), std::move(out));
    return record("scale", {a}, c, [a, c, factor]() mutable {
      auto dc = c.grad();
      auto da = a.grad_accumulator();
      for (std::size_t i = 0; i < dc.size(); ++i) da[i] += factor * dc[i];
    });
  }

  Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = kernels::sigmoid(x[i]);
    Tensor<T> y(x.shape(), std::move(out));
    return record("sigmoid", {x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_accumulator();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * y[i] * (T(1) - y[i]);
    });
  }

  // Exact (erf) GELU.
  Tensor<T> gelu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * T(std::numbers::sqrt2 / 2)));
    }
    Tensor<T> y(x.shape(), std::move(out));
    return record("gelu", {x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_accumulator();
      const T inv_sqrt_2pi = T(std::numbers::inv_sqrtpi / std::numbers::sqrt2);
      for (std::size_t i = 0; i < dy.size(); ++i) {
        const T v = x[i];
        const T cdf = T(0.5) * (T(1) + std::erf(v * T(std::numbers::sqrt2 / 2)));
        const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
        dx[i] += dy[i] * (cdf + v * pdf);
      }
    });
  }

  Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = x[i] > T(0) ? x[i] : T(0);
      relu_margin_ = std::min(relu_margin_, std::abs(x[i]));
      relu_pattern_.push_back(x[i] > T(0));
    }
    Tensor<T> y(x.shape(), std::move(out));
    return record("relu", {x}, y, [x, y]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_accumulator();
      for (std::size_t i = 0; i < dy.size(); ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
      }
    });
  }

  // ---------------------------------------------------------- row-wise

  Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
    const std::size_t d = x.cols();
    if (gamma.size() != d || beta.size() != d) {
      throw DimensionError("numerics", "layer_norm affine width does not match " + shape_string(x.shape()));
    }
    const std::size_t rows = x.rows();
    std::vector<T> xhat(x.size()), inv_std(rows), out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = x.data().data() + r * d;
      T mean = T(0);
      for (std::size_t j = 0; j < d; ++j) mean += row[j];
      mean /= T(d);
      T var = T(0);
      for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
      var /= T(d);
      inv_std[r] = T(1) / std::sqrt(var + eps);
      for (std::size_t j = 0; j < d; ++j) {
        xhat[r * d + j] = (row[j] - mean) * inv_std[r];
        out[r * d + j] = xhat[r * d + j] * gamma[j] + beta[j];
      }
    }
    Tensor<T> y(x.shape(), std::move(out));
    return record("layer_norm", {x, gamma, beta}, y,
                  [x, gamma, beta, y, xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d]() mutable {
                    auto dy = y.grad();
                    if (gamma.requires_grad() || beta.requires_grad()) {
                      auto dg = gamma.grad_accumulator();
                      auto db = beta.grad_accumulator();
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t j = 0; j < d; ++j) {
                          dg[j] += dy[r * d + j] * xhat[r * d + j];
                          db[j] += dy[r * d + j];
                        }
                      }
                    }
                    if (!x.requires_grad()) return;
                    auto dx = x.grad_accumulator();
                    for (std::size_t r = 0; r < rows; ++r) {
                      T sum_g = T(0), sum_gx = T(0);
                      for (std::size_t j = 0; j < d; ++j) {
                        const T g = dy[r * d + j] * gamma[j];
                        sum_g += g;
                        sum_gx += g * xhat[r * d + j];
                      }
                      sum_g /= T(d);
                      sum_gx /= T(d);
                      for (std::size_t j = 0; j < d; ++j) {
                        const T g = dy[r * d + j] * gamma[j];
                        dx[r * d + j] += inv_std[r] * (g - sum_g - xhat[r * d + j] * sum_gx);
                      }
                    }
                  });
  }

  Tensor<T> softmax_rows(const Tensor<T>& x) {
    const std::size_t d = x.cols(), rows = x.rows();
    std::vector<T> out(x.size());
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = x.data().data() + r * d;
      T mx = row[0];
      for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, row[j]);
      T total = T(0);
      for (std::size_t j = 0; j < d; ++j) {
        out[r * d + j] = std::exp(row[j] - mx);
        total += out[r * d + j];
      }
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= total;
    }
    Tensor<T> y(x.shape(), std::move(out));
    return record("softmax_rows", {x}, y, [x, y, rows, d]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_accumulator();
      for (std::size_t r = 0; r < rows; ++r) {
        T dot = T(0);
        for (std::size_t j = 0; j < d; ++j) dot += dy[r * d + j] * y[r * d + j];
        for (std::size_t j = 0; j < d; ++j) dx[r * d + j] += y[r * d + j] * (dy[r * d + j] - dot);
      }
    });
  }

  // ------------------------------------------------------------ indexing

  Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices) {
    if (x.rank() != 2) throw DimensionError("numerics", "gather_rows needs a rank-2 tensor");
    if (indices.empty()) throw ContractError("numerics", "gather_rows with no indices");
    const std::size_t d = x.cols();
    std::vector<T> out(indices.size() * d);
    for (std::size_t r = 0; r < indices.size(); ++r) {
      if (indices[r] >= x.dim(0)) {
        throw ContractError("numerics", "row index " + std::to_string(indices[r]) + " out of range for " +
                                            shape_string(x.shape()));
      }
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(indices[r] * d), d, out.begin() + r * d);
    }
    Tensor<T> y({indices.size(), d}, std::move(out));
    return record("gather_rows", {x}, y,
                  [x, y, idx = std::vector<std::size_t>(indices.begin(), indices.end()), d]() mutable {
                    auto dy = y.grad();
                    auto dx = x.grad_accumulator();
                    for (std::size_t r = 0; r < idx.size(); ++r) {
                      for (std::size_t j = 0; j < d; ++j) dx[idx[r] * d + j] += dy[r * d + j];
                    }
                  });
  }

  Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
    if (parts.empty()) throw ContractError("numerics", "concat_cols with no parts");
    const std::size_t rows = parts[0].rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 2 || p.rows() != rows) throw DimensionError("numerics", "concat_cols row counts disagree");
      total += p.cols();
    }
    std::vector<T> out(rows * total);
    std::size_t offset = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(p.data().begin() + static_cast<std::ptrdiff_t>(r * w), w, out.begin() + r * total + offset);
      }
      offset += w;
    }
    Tensor<T> y({rows, total}, std::move(out));
    return record("concat_cols", parts, y, [parts, y, rows, total]() mutable {
      auto dy = y.grad();
      std::size_t off = 0;
      for (auto& p : parts) {
        const std::size_t w = p.cols();
        if (p.requires_grad()) {
          auto dp = p.grad_accumulator();
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < w; ++j) dp[r * w + j] += dy[r * total + off + j];
          }
        }
        off += w;
      }
    });
  }

  Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t width) {
    if (x.rank() != 2 || start + width > x.cols() || width == 0) {
      throw DimensionError("numerics", "slice_cols [" + std::to_string(start) + ", +" + std::to_string(width) +
                                           ") outside " + shape_string(x.shape()));
    }
    const std::size_t rows = x.rows(), d = x.cols();
    std::vector<T> out(rows * width);
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(x.data().begin() + static_cast<std::ptrdiff_t>(r * d + start), width, out.begin() + r * width);
    }
    Tensor<T> y({rows, width}, std::move(out));
    return record("slice_cols", {x}, y, [x, y, rows, d, start, width]() mutable {
      auto dy = y.grad();
      auto dx = x.grad_accumulator();
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < width; ++j) dx[r * d + start + j] += dy[r * width + j];
      }
    });
  }

  // ---------------------------------------------------------- reductions

  Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (auto v : x.data()) total += v;
    Tensor<T> y = Tensor<T>::scalar(total);
    return record("sum", {x}, y, [x, y]() mutable {
      const T g = y.grad()[0];
      for (auto& v : x.grad_accumulator()) v += g;
    });
  }

  Tensor<T> mean(const Tensor<T>& x) { return scale(sum(x), T(1) / T(x.size())); }

  // ------------------------------------------------------------- dropout

  /// Inverted dropout as a recorded mask multiply. Identity when p == 0 or in eval mode.
  Tensor<T> dropout(const Tensor<T>& x, double p, Mode mode, Rng* rng) {
    if (p < 0.0 || p >= 1.0) throw ConfigError("numerics", "dropout probability must lie in [0, 1)");
    if (mode == Mode::eval || p == 0.0) return x;
    if (rng == nullptr) throw ContractError("numerics", "train-mode dropout needs a generator");
    stochastic_ = true;
    std::bernoulli_distribution keep(1.0 - p);
    const T kept = T(1.0 / (1.0 - p));
    std::vector<T> mask(x.size());
    for (auto& m : mask) m = keep(*rng) ? kept : T(0);
    return mul(x, Tensor<T>(x.shape(), std::move(mask)));
  }

 private:
  Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, bool multiply) {
    enum class Bcast { none, scalar, row } kind;
    if (b.shape() == a.shape()) {
      kind = Bcast::none;
    } else if (b.size() == 1) {
      kind = Bcast::scalar;
    } else if (b.rank() == 1 && b.size() == a.cols()) {
      kind = Bcast::row;
    } else {
      throw DimensionError("numerics", std::string(multiply ? "mul" : "add") + " cannot broadcast " +
                                           shape_string(b.shape()) + " onto " + shape_string(a.shape()));
    }
    const std::size_t n = a.size(), d = a.cols();
    auto bidx = [kind, d](std::size_t i) -> std::size_t {
      switch (kind) {
        case Bcast::none: return i;
        case Bcast::scalar: return 0;
        case Bcast::row: return i % d;
      }
      return i;
    };
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = multiply ? a[i] * b[bidx(i)] : a[i] + b[bidx(i)];
    Tensor<T> c(a.shape(), std::move(out));
    return record(multiply ? "mul" : "add", {a, b}, c, [a, b, c, n, bidx, multiply]() mutable {
      auto dc = c.grad();
      if (a.requires_grad()) {
        auto da = a.grad_accumulator();
        for (std::size_t i = 0; i < n; ++i) da[i] += multiply ? dc[i] * b[bidx(i)] : dc[i];
      }
      if (b.requires_grad()) {
        auto db = b.grad_accumulator();
        for (std::size_t i = 0; i < n; ++i) db[bidx(i)] += multiply ? dc[i] * a[i] : dc[i];
      }
    });
  }

  std::vector<Op> ops_;
  bool stochastic_ = false;
  T relu_margin_ = std::numeric_limits<T>::infinity();
  std::vector<bool> relu_pattern_;
};

}  // namespace gliner::nn
