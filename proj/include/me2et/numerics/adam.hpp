#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "me2et/numerics/tensor.hpp"

namespace me2et::num {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;

  explicit AdamState(std::span<const Tensor<T>> params) {
    for (const auto& p : params) {
      m.emplace_back(p.numel(), T{0});
      v.emplace_back(p.numel(), T{0});
    }
  }
};

// One bias-corrected Adam update using the gradients accumulated on `params`.
// Parameters without a gradient are treated as having a zero gradient.
template <class T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state, const AdamConfig& cfg) {
  if (params.size() != state.m.size()) throw DimensionError("adam_step: parameter count does not match optimizer state");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (m.size() != p.numel()) throw DimensionError("adam_step: state shape mismatch for parameter " + std::to_string(i));
    if (!p.has_grad()) {
      // Zero gradient still decays the moments.
      for (std::size_t k = 0; k < m.size(); ++k) {
        m[k] = T(cfg.beta1) * m[k];
        v[k] = T(cfg.beta2) * v[k];
      }
    }
    auto values = p.mutable_data();
    auto grad = p.grad();
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (p.has_grad()) {
        const T g = grad[k];
        m[k] = T(cfg.beta1) * m[k] + T(1 - cfg.beta1) * g;
        v[k] = T(cfg.beta2) * v[k] + T(1 - cfg.beta2) * g * g;
      }
      const double m_hat = double(m[k]) / c1;
      const double v_hat = double(v[k]) / c2;
      values[k] -= T(cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps));
    }
  }
}

template <class T>
void zero_grad(std::span<Tensor<T>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace me2et::num
