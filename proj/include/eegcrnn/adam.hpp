#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "eegcrnn/autodiff.hpp"
#include "eegcrnn/tensor.hpp"

namespace eegcrnn {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <std::floating_point T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<Tensor<T>> first;   // one per parameter
  std::vector<Tensor<T>> second;

  // Zero moments shaped like `params`.
  template <class Range>
  void init(const Range& params) {
    first.clear();
    second.clear();
    for (const auto& p : params) {
      first.emplace_back(p.shape());
      second.emplace_back(p.shape());
    }
    step = 0;
  }
};

// One bias-corrected Adam update. Moments are allocated on the first call if
// the state is empty.
template <std::floating_point T>
void adam_step(std::span<Tensor<T>* const> params, std::span<const Tensor<T>* const> grads, AdamState<T>& state) {
  if (params.size() != grads.size()) throw ShapeError("adam_step: parameter and gradient counts differ");
  if (state.first.empty() && state.second.empty()) {
    for (const auto* p : params) {
      state.first.emplace_back(p->shape());
      state.second.emplace_back(p->shape());
    }
  }
  if (state.first.size() != params.size() || state.second.size() != params.size()) {
    throw ShapeError("adam_step: optimizer state holds " + std::to_string(state.first.size()) + " moments for " +
                     std::to_string(params.size()) + " parameters");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.first[i].shape() ||
        params[i]->shape() != state.second[i].shape()) {
      throw ShapeError("adam_step: shape mismatch at parameter " + std::to_string(i) + ": " +
                       shape_str(params[i]->shape()) + " vs gradient " + shape_str(grads[i]->shape()));
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  const T b1 = static_cast<T>(h.beta1), b2 = static_cast<T>(h.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    T* w = params[i]->data();
    const T* g = grads[i]->data();
    T* m = state.first[i].data();
    T* v = state.second[i].data();
    for (std::size_t j = 0; j < params[i]->size(); ++j) {
      m[j] = b1 * m[j] + (T{1} - b1) * g[j];
      v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
      const double m_hat = static_cast<double>(m[j]) / correction1;
      const double v_hat = static_cast<double>(v[j]) / correction2;
      w[j] -= static_cast<T>(h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon));
    }
  }
}

// Update tape parameters in place from their accumulated gradients.
template <std::floating_point T>
void adam_step(std::vector<Var<T>>& params, AdamState<T>& state) {
  std::vector<Tensor<T>*> values;
  std::vector<const Tensor<T>*> grads;
  values.reserve(params.size());
  grads.reserve(params.size());
  for (auto& p : params) {
    values.push_back(&p.mutable_value());
    grads.push_back(&p.grad());
  }
  adam_step<T>(std::span<Tensor<T>* const>(values), std::span<const Tensor<T>* const>(grads), state);
}

}  // namespace eegcrnn
