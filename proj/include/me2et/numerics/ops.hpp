#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "me2et/numerics/tensor.hpp"

namespace me2et::num {

// Forward FLOPs per output element for the non-GEMM primitives. A GEMM
// multiply-accumulate counts as 2; the analytic cost model in complexity.hpp
// uses these same constants, so tape counts and closed forms agree exactly.
namespace flop_cost {
inline constexpr std::uint64_t kAdd = 1;
inline constexpr std::uint64_t kScale = 1;
inline constexpr std::uint64_t kMul = 1;
inline constexpr std::uint64_t kSum = 1;
inline constexpr std::uint64_t kSoftmax = 5;    // max, subtract, exp, accumulate, divide
inline constexpr std::uint64_t kLayerNorm = 8;  // mean, centre, square, accumulate, rsqrt-scale, gamma, beta, +1
inline constexpr std::uint64_t kGelu = 8;
inline constexpr std::uint64_t kBce = 6;
}  // namespace flop_cost

// Test fixtures for proving the gradient checker catches broken backward passes.
namespace fault {
inline std::atomic<bool> gelu_backward_sign_flip{false};
}

namespace detail {

template <class T>
using BackwardFn = std::function<void(Node<T>&)>;

template <class T>
Tensor<T> finish(std::string_view op, Shape shape, Buffer<T> value, const std::vector<Tensor<T>>& parents,
                 std::uint64_t flops, BackwardFn<T> backward) {
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (auto* tape = Tape<T>::current()) {
    tape->add_flops(flops);
    bool needs_grad = std::any_of(parents.begin(), parents.end(), [](const Tensor<T>& p) { return p.requires_grad(); });
    if (needs_grad) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (const auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
      tape->record(node);
    }
  }
  return Tensor<T>(std::move(node));
}

// Gradient slot of parent i, or nullptr when that parent takes no gradient.
template <class T>
T* parent_grad(Node<T>& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? p.grad_data() : nullptr;
}

template <class T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.dim() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_to_string(t.shape()));
  }
}

// c[m x p] += a[m x n] * b[n x p]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    T* ci = c + i * p;
    const T* ai = a + i * n;
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = ai[k];
      const T* bk = b + k * p;
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
}

// c[m x n] += a[m x p] * b[n x p]^T. Transposing b first keeps the inner loop
// a contiguous axpy, which vectorizes; a dot-product inner loop does not.
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
  std::vector<T> bt(n * p);
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t j = 0; j < p; ++j) bt[j * n + k] = b[k * p + j];
  gemm_nn(a, bt.data(), c, m, p, n);
}

// c[n x p] += a[m x n]^T * b[m x p]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t n, std::size_t p) {
  for (std::size_t i = 0; i < m; ++i) {
    const T* ai = a + i * n;
    const T* bi = b + i * p;
    for (std::size_t k = 0; k < n; ++k) {
      const T aik = ai[k];
      T* ck = c + k * p;
      for (std::size_t j = 0; j < p; ++j) ck[j] += aik * bi[j];
    }
  }
}

}  // namespace detail

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.rows(), n = a.cols(), p = b.cols();
  if (b.rows() != n) {
    throw DimensionError("matmul: inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                         shape_to_string(b.shape()));
  }
  Buffer<T> out(m * p);
  detail::gemm_nn(a.data().data(), b.data().data(), out.data(), m, n, p);
  return detail::finish<T>("matmul", {m, p}, std::move(out), {a, b}, 2ull * m * n * p, [m, n, p](Node<T>& self) {
    const T* g = self.grad.data();
    if (T* ga = detail::parent_grad(self, 0)) detail::gemm_nt(g, self.parents[1]->value.data(), ga, m, n, p);
    if (T* gb = detail::parent_grad(self, 1)) detail::gemm_tn(self.parents[0]->value.data(), g, gb, m, n, p);
  });
}

template <class T>
Tensor<T> transpose(const Tensor<T>& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Buffer<T> out(m * n);
  const T* x = a.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return detail::finish<T>("transpose", {n, m}, std::move(out), {a}, 0, [m, n](Node<T>& self) {
    const T* g = self.grad.data();
    T* ga = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shapes differ: " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
  const std::size_t n = a.numel();
  Buffer<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::finish<T>("add", a.shape(), std::move(out), {a, b}, flop_cost::kAdd * n, [n](Node<T>& self) {
    const T* g = self.grad.data();
    for (std::size_t p = 0; p < 2; ++p)
      if (T* gp = detail::parent_grad(self, p))
        for (std::size_t i = 0; i < n; ++i) gp[i] += g[i];
  });
}

// x[m x n] + bias broadcast over rows; bias holds n values.
template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  detail::require_matrix(x, "add_bias");
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_to_string(bias.shape()) + " does not match columns of " +
                         shape_to_string(x.shape()));
  }
  Buffer<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] + bias.data()[j];
  return detail::finish<T>("add_bias", x.shape(), std::move(out), {x, bias}, flop_cost::kAdd * m * n,
                           [m, n](Node<T>& self) {
                             const T* g = self.grad.data();
                             if (T* gx = detail::parent_grad(self, 0))
                               for (std::size_t i = 0; i < m * n; ++i) gx[i] += g[i];
                             if (T* gb = detail::parent_grad(self, 1))
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
                           });
}

// x[m x n] * row elementwise, row broadcast over the m rows; row holds n values.
template <class T>
Tensor<T> mul_row(const Tensor<T>& x, const Tensor<T>& row) {
  detail::require_matrix(x, "mul_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.numel() != n) {
    throw DimensionError("mul_row: row " + shape_to_string(row.shape()) + " does not match columns of " +
                         shape_to_string(x.shape()));
  }
  Buffer<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x.data()[i * n + j] * row.data()[j];
  return detail::finish<T>("mul_row", x.shape(), std::move(out), {x, row}, flop_cost::kMul * m * n,
                           [m, n](Node<T>& self) {
                             const T* g = self.grad.data();
                             const T* xv = self.parents[0]->value.data();
                             const T* rv = self.parents[1]->value.data();
                             if (T* gx = detail::parent_grad(self, 0))
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * rv[j];
                             if (T* gr = detail::parent_grad(self, 1))
                               for (std::size_t i = 0; i < m; ++i)
                                 for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j] * xv[i * n + j];
                           });
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  const std::size_t n = x.numel();
  Buffer<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = x.data()[i] * factor;
  return detail::finish<T>("scale", x.shape(), std::move(out), {x}, flop_cost::kScale * n, [n, factor](Node<T>& self) {
    const T* g = self.grad.data();
    T* gx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] * factor;
  });
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  T acc{0};
  for (auto v : x.data()) acc += v;
  Buffer<T> out(1, acc);
  return detail::finish<T>("sum", {1}, std::move(out), {x}, flop_cost::kSum * n, [n](Node<T>& self) {
    const T g = self.grad[0];
    T* gx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g;
  });
}

// Numerically stabilised softmax along `axis` (max-subtraction per slice).
template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  const Shape& shape = x.shape();
  if (axis >= shape.size()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " out of range for " + shape_to_string(shape));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::size_t len = shape[axis];
  Buffer<T> out(x.numel());
  const T* in = x.data().data();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < inner; ++r) {
      const std::size_t base = o * len * inner + r;
      T mx = in[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
      T total{0};
      for (std::size_t i = 0; i < len; ++i) {
        T e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= total;
    }
  }
  return detail::finish<T>("softmax", shape, std::move(out), {x}, flop_cost::kSoftmax * x.numel(),
                           [outer, inner, len](Node<T>& self) {
                             const T* y = self.value.data();
                             const T* g = self.grad.data();
                             T* gx = detail::parent_grad(self, 0);
                             for (std::size_t o = 0; o < outer; ++o) {
                               for (std::size_t r = 0; r < inner; ++r) {
                                 const std::size_t base = o * len * inner + r;
                                 T dot{0};
                                 for (std::size_t i = 0; i < len; ++i) dot += g[base + i * inner] * y[base + i * inner];
                                 for (std::size_t i = 0; i < len; ++i) {
                                   const std::size_t k = base + i * inner;
                                   gx[k] += y[k] * (g[k] - dot);
                                 }
                               }
                             }
                           });
}

// Normalises over the last dimension, then applies gamma * xhat + beta.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) {
    throw DimensionError("layer_norm: gamma/beta " + shape_to_string(gamma.shape()) + "/" +
                         shape_to_string(beta.shape()) + " do not match last dimension of " +
                         shape_to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  Buffer<T> out(x.numel());
  const T* in = x.data().data();
  auto stats = [d, eps](const T* row) {
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= T(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= T(d);
    return std::pair<T, T>{mean, T{1} / std::sqrt(var + eps)};
  };
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = in + r * d;
    auto [mean, inv_std] = stats(row);
    for (std::size_t j = 0; j < d; ++j)
      out[r * d + j] = (row[j] - mean) * inv_std * gamma.data()[j] + beta.data()[j];
  }
  return detail::finish<T>(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta}, flop_cost::kLayerNorm * x.numel(),
      [rows, d, stats](Node<T>& self) {
        const T* in = self.parents[0]->value.data();
        const T* gam = self.parents[1]->value.data();
        const T* g = self.grad.data();
        T* gx = detail::parent_grad(self, 0);
        T* ggamma = detail::parent_grad(self, 1);
        T* gbeta = detail::parent_grad(self, 2);
        std::vector<T> xhat(d), dxhat(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* row = in + r * d;
          const T* gr = g + r * d;
          auto [mean, inv_std] = stats(row);
          T mean_dxhat{0}, mean_dxhat_xhat{0};
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (row[j] - mean) * inv_std;
            dxhat[j] = gr[j] * gam[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xhat[j];
            if (ggamma) ggamma[j] += gr[j] * xhat[j];
            if (gbeta) gbeta[j] += gr[j];
          }
          mean_dxhat /= T(d);
          mean_dxhat_xhat /= T(d);
          if (gx)
            for (std::size_t j = 0; j < d; ++j)
              gx[r * d + j] += inv_std * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
        }
      });
}

// Exact GELU: x * Phi(x).
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
  const std::size_t n = x.numel();
  Buffer<T> out(n);
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < n; ++i) {
    const T v = x.data()[i];
    out[i] = v * T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
  }
  return detail::finish<T>("gelu", x.shape(), std::move(out), {x}, flop_cost::kGelu * n, [n, inv_sqrt2](Node<T>& self) {
    const T* in = self.parents[0]->value.data();
    const T* g = self.grad.data();
    T* gx = detail::parent_grad(self, 0);
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    const T sign = fault::gelu_backward_sign_flip.load() ? T(-1) : T(1);
    for (std::size_t i = 0; i < n; ++i) {
      const T v = in[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += sign * g[i] * (cdf + v * pdf);
    }
  });
}

// Mean binary cross-entropy over all elements, in the stable form
// max(z,0) - z*t + log(1 + exp(-|z|)).
template <class T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) {
    throw DimensionError("bce_with_logits: logits " + shape_to_string(logits.shape()) + " vs targets " +
                         shape_to_string(targets.shape()));
  }
  for (auto t : targets.data()) {
    if (t != T(0) && t != T(1)) throw ValidationError("bce_with_logits: targets must be 0 or 1, got " + std::to_string(t));
  }
  const std::size_t n = logits.numel();
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) {
    const T z = logits.data()[i];
    acc += std::max(z, T(0)) - z * targets.data()[i] + std::log1p(std::exp(-std::abs(z)));
  }
  Buffer<T> out(1, acc / T(n));
  return detail::finish<T>("bce_with_logits", {1}, std::move(out), {logits, targets}, flop_cost::kBce * n,
                           [n](Node<T>& self) {
                             const T* z = self.parents[0]->value.data();
                             const T* t = self.parents[1]->value.data();
                             const T g = self.grad[0] / T(n);
                             if (T* gz = detail::parent_grad(self, 0))
                               for (std::size_t i = 0; i < n; ++i) gz[i] += g * (T(1) / (T(1) + std::exp(-z[i])) - t[i]);
                           });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  const std::size_t n = x.numel();
  Buffer<T> out(std::vector<T>(x.data().begin(), x.data().end()));
  return detail::finish<T>("reshape", std::move(shape), std::move(out), {x}, 0, [n](Node<T>& self) {
    const T* g = self.grad.data();
    T* gx = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < n; ++i) gx[i] += g[i];
  });
}

template <class T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t start, std::size_t count) {
  detail::require_matrix(x, "slice_rows");
  const std::size_t cols = x.cols();
  if (start + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  Buffer<T> out(std::vector<T>(x.data().begin() + start * cols, x.data().begin() + (start + count) * cols));
  return detail::finish<T>("slice_rows", {count, cols}, std::move(out), {x}, 0, [start, count, cols](Node<T>& self) {
    const T* g = self.grad.data();
    T* gx = detail::parent_grad(self, 0) + start * cols;
    for (std::size_t i = 0; i < count * cols; ++i) gx[i] += g[i];
  });
}

template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t count) {
  detail::require_matrix(x, "slice_cols");
  const std::size_t rows = x.rows(), cols = x.cols();
  if (start + count > cols) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " + std::to_string(start + count) +
                         ") out of range for " + shape_to_string(x.shape()));
  }
  Buffer<T> out(rows * count);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < count; ++j) out[i * count + j] = x.data()[i * cols + start + j];
  return detail::finish<T>("slice_cols", {rows, count}, std::move(out), {x}, 0,
                           [rows, cols, start, count](Node<T>& self) {
                             const T* g = self.grad.data();
                             T* gx = detail::parent_grad(self, 0);
                             for (std::size_t i = 0; i < rows; ++i)
                               for (std::size_t j = 0; j < count; ++j) gx[i * cols + start + j] += g[i * count + j];
                           });
}

template <class T>
Tensor<T> concat_rows(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_rows");
    if (p.cols() != cols) {
      throw DimensionError("concat_rows: column count " + shape_to_string(p.shape()) + " vs " + std::to_string(cols));
    }
    rows += p.rows();
  }
  std::vector<T> values;
  values.reserve(rows * cols);
  for (const auto& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.numel());
  return detail::finish<T>("concat_rows", {rows, cols}, Buffer<T>(std::move(values)), parts, 0,
                           [sizes](Node<T>& self) {
                             const T* g = self.grad.data();
                             std::size_t offset = 0;
                             for (std::size_t p = 0; p < sizes.size(); ++p) {
                               if (T* gp = detail::parent_grad(self, p))
                                 for (std::size_t i = 0; i < sizes[p]; ++i) gp[i] += g[offset + i];
                               offset += sizes[p];
                             }
                           });
}

template <class T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> widths;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row count " + shape_to_string(p.shape()) + " vs " + std::to_string(rows));
    }
    widths.push_back(p.cols());
    cols += p.cols();
  }
  Buffer<T> out(rows * cols);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < w; ++j) out[i * cols + offset + j] = p.data()[i * w + j];
    offset += w;
  }
  return detail::finish<T>("concat_cols", {rows, cols}, std::move(out), parts, 0, [rows, cols, widths](Node<T>& self) {
    const T* g = self.grad.data();
    std::size_t offset = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      const std::size_t w = widths[p];
      if (T* gp = detail::parent_grad(self, p))
        for (std::size_t i = 0; i < rows; ++i)
          for (std::size_t j = 0; j < w; ++j) gp[i * w + j] += g[i * cols + offset + j];
      offset += w;
    }
  });
}

// Stacks `count` copies of a single row vector (numel d) into a count x d matrix.
template <class T>
Tensor<T> repeat_rows(const Tensor<T>& row, std::size_t count) {
  const std::size_t d = row.numel();
  Buffer<T> out(count * d);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = row.data()[j];
  return detail::finish<T>("repeat_rows", {count, d}, std::move(out), {row}, 0, [count, d](Node<T>& self) {
    const T* g = self.grad.data();
    T* gr = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < d; ++j) gr[j] += g[i * d + j];
  });
}

// Row lookup: out[i] = table[ids[i]].
template <class T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> ids) {
  detail::require_matrix(table, "gather_rows");
  const std::size_t d = table.cols();
  Buffer<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= table.rows()) {
      throw ValidationError("gather_rows: index " + std::to_string(ids[i]) + " out of range for table " +
                            shape_to_string(table.shape()));
    }
    for (std::size_t j = 0; j < d; ++j) out[i * d + j] = table.data()[ids[i] * d + j];
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return detail::finish<T>("gather_rows", {ids.size(), d}, std::move(out), {table}, 0, [idx, d](Node<T>& self) {
    const T* g = self.grad.data();
    T* gt = detail::parent_grad(self, 0);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gt[idx[i] * d + j] += g[i * d + j];
  });
}

}  // namespace me2et::num
