#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "me2et/numerics/tensor.hpp"

namespace me2et::num {

struct GradCheckFailure {
  std::size_t input = 0;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_error = 0;
};

struct GradCheckReport {
  double max_rel_error = 0;
  std::size_t coordinates = 0;
  double tolerance = 0;
  std::vector<GradCheckFailure> failures;

  bool passed() const { return failures.empty(); }
};

// Relative error with an absolute floor: gradients smaller than `floor` are
// compared absolutely, since central differences cannot resolve them relatively.
inline double relative_error(double analytic, double numeric, double floor = 1e-3) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

template <class T>
using ScalarFn = std::function<Tensor<T>(std::span<const Tensor<T>>)>;

// Compares backward-pass gradients of a scalar function against central
// differences at every coordinate of every input. All failing coordinates are
// reported; the check never stops early.
template <class T>
GradCheckReport grad_check(const ScalarFn<T>& fn, std::vector<Tensor<T>> inputs, double tolerance = 1e-4,
                           double h = 1e-5) {
  for (auto& x : inputs) {
    x.set_requires_grad(true);
    x.zero_grad();
  }
  std::vector<std::vector<double>> analytic;
  {
    Tape<T> tape;
    TapeScope<T> scope(tape);
    Tensor<T> loss = fn(inputs);
    if (loss.numel() != 1) throw DimensionError("grad_check: function must return a scalar");
    tape.backward(loss);
    for (const auto& x : inputs) {
      std::vector<double> g(x.numel(), 0.0);
      if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), g.begin());
      analytic.push_back(std::move(g));
    }
  }

  GradCheckReport report;
  report.tolerance = tolerance;
  NoGradScope<T> no_grad;
  for (std::size_t in = 0; in < inputs.size(); ++in) {
    auto values = inputs[in].mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T original = values[i];
      values[i] = original + T(h);
      const double plus = fn(inputs).item();
      values[i] = original - T(h);
      const double minus = fn(inputs).item();
      values[i] = original;
      const double numeric = (plus - minus) / (2 * h);
      const double err = relative_error(analytic[in][i], numeric);
      report.max_rel_error = std::max(report.max_rel_error, err);
      ++report.coordinates;
      if (!(err <= tolerance)) report.failures.push_back({in, i, analytic[in][i], numeric, err});
    }
  }
  for (auto& x : inputs) x.zero_grad();
  return report;
}

}  // namespace me2et::num
