#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "eegcrnn/autodiff.hpp"

namespace eegcrnn {

inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max(1e-8, std::abs(a) + std::abs(b));
}

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t coordinates = 0;
};

// Compares tape gradients of a scalar function against the fourth-order
// central difference (8 (f(x+h) - f(x-h)) - (f(x+2h) - f(x-2h))) / (12 h),
// one coordinate of each input at a time.
// `fn` must rebuild the graph from `inputs` on every call.
template <std::floating_point T, class Fn>
GradCheckResult finite_diff_check(Fn&& fn, std::vector<Var<T>> inputs, double eps = 1e-4) {
  for (auto& in : inputs) in.zero_grad();
  {
    Var<T> loss = fn();
    backward(loss);
  }
  std::vector<Tensor<T>> analytic;
  analytic.reserve(inputs.size());
  for (auto& in : inputs) analytic.push_back(in.grad());

  auto evaluate = [&fn] {
    NoGradGuard guard;
    return static_cast<double>(fn().value().item());
  };
  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<T>& x = inputs[i].mutable_value();
    for (std::size_t j = 0; j < x.size(); ++j) {
      const T saved = x[j];
      auto at = [&](double offset) {
        x[j] = static_cast<T>(saved + offset);
        return evaluate();
      };
      const double near = at(eps) - at(-eps);
      const double far = at(2.0 * eps) - at(-2.0 * eps);
      x[j] = saved;
      const double numeric = (8.0 * near - far) / (12.0 * eps);
      result.max_rel_err = std::max(result.max_rel_err, relative_error(analytic[i][j], numeric));
      ++result.coordinates;
    }
  }
  return result;
}

template <std::floating_point T, class Fn>
double finite_diff_check(Fn&& fn, Var<T> input, double eps = 1e-4) {
  return finite_diff_check<T>(std::forward<Fn>(fn), std::vector<Var<T>>{std::move(input)}, eps).max_rel_err;
}

}  // namespace eegcrnn
