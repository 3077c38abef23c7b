#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "eegcrnn/autodiff.hpp"
#include "eegcrnn/tensor.hpp"

namespace eegcrnn {

namespace detail {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// c (m x n) (+)= op(a) * op(b), all row-major.
template <class T>
void gemm(const T* a, std::size_t a_rows, std::size_t a_cols, bool trans_a, const T* b, std::size_t b_rows,
          std::size_t b_cols, bool trans_b, T* c, bool accumulate) {
  ConstMatrixMap<T> am(a, static_cast<Eigen::Index>(a_rows), static_cast<Eigen::Index>(a_cols));
  ConstMatrixMap<T> bm(b, static_cast<Eigen::Index>(b_rows), static_cast<Eigen::Index>(b_cols));
  const auto m = static_cast<Eigen::Index>(trans_a ? a_cols : a_rows);
  const auto n = static_cast<Eigen::Index>(trans_b ? b_rows : b_cols);
  MatrixMap<T> cm(c, m, n);
  auto run = [&](const auto& lhs, const auto& rhs) {
    if (accumulate) {
      cm.noalias() += lhs * rhs;
    } else {
      cm.noalias() = lhs * rhs;
    }
  };
  if (trans_a && trans_b) {
    run(am.transpose(), bm.transpose());
  } else if (trans_a) {
    run(am.transpose(), bm);
  } else if (trans_b) {
    run(am, bm.transpose());
  } else {
    run(am, bm);
  }
}

template <class T>
void accumulate(Tensor<T>& dst, const Tensor<T>& src) {
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace detail

template <std::floating_point T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  if (as.size() != 2 || bs.size() != 2 || as[1] != bs[0]) {
    throw ShapeError("matmul shape mismatch: " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t m = as[0], k = as[1], p = bs[1];
  Tensor<T> out(Shape{m, p});
  detail::gemm(a.value().data(), m, k, false, b.value().data(), k, p, false, out.data(), false);
  return make_result<T>(std::move(out), {a, b}, [m, k, p](Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    const T* g = self.grad.data();
    if (na.requires_grad) {
      detail::gemm(g, m, p, false, nb.value.data(), k, p, true, na.grad_buffer().data(), true);
    }
    if (nb.requires_grad) {
      if (injected_fault() == FaultSite::MatmulBackward) {
        Tensor<T> tmp(nb.value.shape());
        detail::gemm(na.value.data(), m, k, true, g, m, p, false, tmp.data(), false);
        auto& dst = nb.grad_buffer();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= tmp[i];
      } else {
        detail::gemm(na.value.data(), m, k, true, g, m, p, false, nb.grad_buffer().data(), true);
      }
    }
  });
}

template <std::floating_point T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("add shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  detail::accumulate(out, b.value());
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) detail::accumulate(p->grad_buffer(), self.grad);
    }
  });
}

// x + bias broadcast along the last axis.
template <std::floating_point T>
Var<T> add_bias(const Var<T>& x, const Var<T>& bias) {
  const std::size_t cols = x.shape().back();
  if (bias.size() != cols) {
    throw ShapeError("bias of shape " + shape_str(bias.shape()) + " does not match last axis of " +
                     shape_str(x.shape()));
  }
  Tensor<T> out = x.value();
  const T* b = bias.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i % cols];
  return make_result<T>(std::move(out), {x, bias}, [cols](Node<T>& self) {
    auto& nx = *self.parents[0];
    auto& nb = *self.parents[1];
    if (nx.requires_grad) detail::accumulate(nx.grad_buffer(), self.grad);
    if (nb.requires_grad) {
      T* gb = nb.grad_buffer().data();
      for (std::size_t i = 0; i < self.grad.size(); ++i) gb[i % cols] += self.grad[i];
    }
  });
}

template <std::floating_point T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("mul shape mismatch: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor<T> out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  return make_result<T>(std::move(out), {a, b}, [](Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * nb.value[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * na.value[i];
    }
  });
}

template <std::floating_point T>
Var<T> scale(const Var<T>& a, T factor) {
  Tensor<T> out = a.value();
  for (auto& v : out.values()) v *= factor;
  return make_result<T>(std::move(out), {a}, [factor](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

// Elementwise map with derivative expressed through (input, output).
template <std::floating_point T, class F, class DF>
Var<T> unary(const Var<T>& x, F f, DF df, FaultSite site = FaultSite::None) {
  Tensor<T> out(x.shape());
  const T* in = x.value().data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_result<T>(std::move(out), {x}, [df, site](Node<T>& self) {
    auto& parent = *self.parents[0];
    auto& g = parent.grad_buffer();
    const T sign = injected_fault() == site && site != FaultSite::None ? T{-1} : T{1};
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign * self.grad[i] * df(parent.value[i], self.value[i]);
  });
}

// ELU with alpha = 1.
template <std::floating_point T>
Var<T> elu(const Var<T>& x) {
  return unary(
      x, [](T v) { return v > T{0} ? v : std::expm1(v); },
      [](T in, T out) { return in > T{0} ? T{1} : out + T{1}; }, FaultSite::EluBackward);
}

template <std::floating_point T>
T sigmoid_value(T v) {
  if (v >= T{0}) return T{1} / (T{1} + std::exp(-v));
  const T e = std::exp(v);
  return e / (T{1} + e);
}

template <std::floating_point T>
Var<T> sigmoid(const Var<T>& x) {
  return unary(x, [](T v) { return sigmoid_value(v); }, [](T, T out) { return out * (T{1} - out); });
}

template <std::floating_point T>
Var<T> tanh(const Var<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T out) { return T{1} - out * out; });
}

template <std::floating_point T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  return make_result<T>(x.value().reshaped(std::move(shape)), {x}, [](Node<T>& self) {
    detail::accumulate(self.parents[0]->grad_buffer(), self.grad);
  });
}

// Concatenation along `axis`; all other extents must agree.
template <std::floating_point T>
Var<T> concat(const Var<T>& a, const Var<T>& b, std::size_t axis) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  bool ok = as.size() == bs.size() && axis < as.size();
  for (std::size_t i = 0; ok && i < as.size(); ++i) ok = i == axis || as[i] == bs[i];
  if (!ok) {
    throw ShapeError("concat mismatch on axis " + std::to_string(axis) + ": " + shape_str(as) + " and " +
                     shape_str(bs));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= as[i];
  for (std::size_t i = axis + 1; i < as.size(); ++i) inner *= as[i];
  const std::size_t ca = as[axis] * inner, cb = bs[axis] * inner;
  Shape shape = as;
  shape[axis] += bs[axis];
  Tensor<T> out(shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(a.value().data() + o * ca, ca, out.data() + o * (ca + cb));
    std::copy_n(b.value().data() + o * cb, cb, out.data() + o * (ca + cb) + ca);
  }
  return make_result<T>(std::move(out), {a, b}, [outer, ca, cb](Node<T>& self) {
    auto& na = *self.parents[0];
    auto& nb = *self.parents[1];
    for (std::size_t o = 0; o < outer; ++o) {
      const T* g = self.grad.data() + o * (ca + cb);
      if (na.requires_grad) {
        T* d = na.grad_buffer().data() + o * ca;
        for (std::size_t i = 0; i < ca; ++i) d[i] += g[i];
      }
      if (nb.requires_grad) {
        T* d = nb.grad_buffer().data() + o * cb;
        for (std::size_t i = 0; i < cb; ++i) d[i] += g[ca + i];
      }
    }
  });
}

// Columns [begin, end) of the last axis.
template <std::floating_point T>
Var<T> slice_last(const Var<T>& x, std::size_t begin, std::size_t end) {
  const std::size_t cols = x.shape().back();
  if (begin >= end || end > cols) {
    throw ShapeError("slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                     shape_str(x.shape()));
  }
  const std::size_t rows = x.size() / cols, width = end - begin;
  Shape shape = x.shape();
  shape.back() = width;
  Tensor<T> out(shape);
  for (std::size_t r = 0; r < rows; ++r) std::copy_n(x.value().data() + r * cols + begin, width, out.data() + r * width);
  return make_result<T>(std::move(out), {x}, [rows, cols, begin, width](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < width; ++c) g[r * cols + begin + c] += self.grad[r * width + c];
    }
  });
}

// Sequences are stored time-major: row t * batch + b holds step t of
// sample b, so a [steps*batch x F] matrix splits into contiguous blocks.

// Block of rows belonging to time step `t`.
template <std::floating_point T>
Var<T> time_step(const Var<T>& seq, std::size_t steps, std::size_t t) {
  const auto& s = seq.shape();
  if (s.size() != 2 || s[0] % steps != 0 || t >= steps) {
    throw ShapeError("time_step(" + std::to_string(t) + "/" + std::to_string(steps) + ") on " + shape_str(s));
  }
  const std::size_t block = s[0] / steps * s[1];
  Tensor<T> out(Shape{s[0] / steps, s[1]});
  std::copy_n(seq.value().data() + t * block, block, out.data());
  return make_result<T>(std::move(out), {seq}, [t, block](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data() + t * block;
    for (std::size_t i = 0; i < block; ++i) g[i] += self.grad[i];
  });
}

// Inverse of time_step: stacks equally shaped [batch x F] steps.
template <std::floating_point T>
Var<T> stack_steps(const std::vector<Var<T>>& steps) {
  if (steps.empty()) throw ShapeError("stack_steps needs at least one step");
  const Shape& s = steps.front().shape();
  for (const auto& v : steps) {
    if (v.shape() != s || s.size() != 2) throw ShapeError("stack_steps: inconsistent step shape " + shape_str(v.shape()));
  }
  const std::size_t block = steps.front().size();
  Tensor<T> out(Shape{s[0] * steps.size(), s[1]});
  for (std::size_t t = 0; t < steps.size(); ++t) std::copy_n(steps[t].value().data(), block, out.data() + t * block);
  return make_result<T>(std::move(out), steps, [block](Node<T>& self) {
    for (std::size_t t = 0; t < self.parents.size(); ++t) {
      auto& p = *self.parents[t];
      if (!p.requires_grad) continue;
      T* g = p.grad_buffer().data();
      for (std::size_t i = 0; i < block; ++i) g[i] += self.grad[t * block + i];
    }
  });
}

// Sum over the time axis of a time-major sequence matrix.
template <std::floating_point T>
Var<T> sum_steps(const Var<T>& seq, std::size_t steps) {
  const auto& s = seq.shape();
  if (s.size() != 2 || s[0] % steps != 0) {
    throw ShapeError("sum_steps over " + std::to_string(steps) + " on " + shape_str(s));
  }
  const std::size_t block = s[0] / steps * s[1];
  Tensor<T> out(Shape{s[0] / steps, s[1]});
  for (std::size_t t = 0; t < steps; ++t) {
    const T* src = seq.value().data() + t * block;
    for (std::size_t i = 0; i < block; ++i) out[i] += src[i];
  }
  return make_result<T>(std::move(out), {seq}, [steps, block](Node<T>& self) {
    T* g = self.parents[0]->grad_buffer().data();
    for (std::size_t t = 0; t < steps; ++t) {
      for (std::size_t i = 0; i < block; ++i) g[t * block + i] += self.grad[i];
    }
  });
}

template <std::floating_point T>
Var<T> sum(const Var<T>& x) {
  T total{0};
  for (auto v : x.value().values()) total += v;
  return make_result<T>(Tensor<T>::scalar(total), {x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (auto& v : g.values()) v += self.grad[0];
  });
}

// Inverted dropout: survivors are scaled by 1/keep so the expectation is unchanged.
template <std::floating_point T>
Var<T> dropout(const Var<T>& x, double keep, std::mt19937_64& rng) {
  if (!(keep > 0.0 && keep <= 1.0)) throw std::invalid_argument("dropout keep probability must be in (0, 1]");
  if (keep == 1.0) return x;
  Tensor<T> mask(x.shape());
  const T survivor = static_cast<T>(1.0 / keep);
  for (auto& m : mask.values()) m = detail::uniform01(rng) < keep ? survivor : T{0};
  Tensor<T> out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make_result<T>(std::move(out), {x}, [mask = std::move(mask)](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * mask[i];
  });
}

template <std::floating_point T>
Tensor<T> softmax_rows(const Tensor<T>& logits) {
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  Tensor<T> probs(logits.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* z = logits.data() + r * k;
    T* p = probs.data() + r * k;
    const T top = *std::max_element(z, z + k);
    T total{0};
    for (std::size_t c = 0; c < k; ++c) total += p[c] = std::exp(z[c] - top);
    for (std::size_t c = 0; c < k; ++c) p[c] /= total;
  }
  return probs;
}

template <std::floating_point T>
struct CrossEntropy {
  Var<T> loss;        // scalar mean over rows
  Tensor<T> probs;    // softmax of the logits, same shape
};

// Mean softmax cross-entropy over the rows of `logits` ([K] or [B x K]).
// The log argument is clamped at 1e-12; the gradient is (p - onehot) / B.
template <std::floating_point T>
CrossEntropy<T> softmax_cross_entropy(const Var<T>& logits, std::span<const int> labels) {
  const std::size_t k = logits.shape().back();
  const std::size_t rows = logits.size() / k;
  if (labels.size() != rows) {
    throw ShapeError(std::to_string(labels.size()) + " labels for logits of shape " + shape_str(logits.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw std::out_of_range("label " + std::to_string(y) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  Tensor<T> probs = softmax_rows(logits.value());
  T total{0};
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t y = static_cast<std::size_t>(labels[r]);
    const T* z = logits.value().data() + r * k;
    const T top = *std::max_element(z, z + k);
    T lse{0};
    for (std::size_t c = 0; c < k; ++c) lse += std::exp(z[c] - top);
    const T nll = std::log(lse) + top - z[y];
    total += std::min(nll, -std::log(T(1e-12)));
  }
  std::vector<int> ys(labels.begin(), labels.end());
  Tensor<T> grad_coef = probs;
  for (std::size_t r = 0; r < rows; ++r) grad_coef[r * k + static_cast<std::size_t>(ys[r])] -= T{1};
  const T inv_rows = T{1} / static_cast<T>(rows);
  for (auto& v : grad_coef.values()) v *= inv_rows;
  Var<T> loss = make_result<T>(Tensor<T>::scalar(total * inv_rows), {logits},
                               [coef = std::move(grad_coef)](Node<T>& self) {
                                 auto& g = self.parents[0]->grad_buffer();
                                 for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * coef[i];
                               });
  return {std::move(loss), std::move(probs)};
}

}  // namespace eegcrnn
