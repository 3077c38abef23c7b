#pragma once

// Brute-force reference computations used only by tests. Nothing here calls
// into the library's kernels.

#include <cmath>
#include <random>
#include <vector>

#include "eegcrnn/tensor.hpp"

namespace oracle {

using eegcrnn::Shape;
using eegcrnn::Tensor;

inline Tensor<double> random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

inline Tensor<double> matmul(const Tensor<double>& a, const Tensor<double>& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), p = b.dim(1);
  Tensor<double> c(Shape{m, p});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) {
      double acc = 0.0;
      for (std::size_t t = 0; t < k; ++t) acc += a[i * k + t] * b[t * p + j];
      c[i * p + j] = acc;
    }
  return c;
}

// Single-sample [C, L] input, [Co, C, 3] kernels.
inline Tensor<double> conv1d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t c_in = x.dim(0), len = x.dim(1), c_out = w.dim(0);
  Tensor<double> y(Shape{c_out, len});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t i = 0; i < len; ++i) {
      double acc = b[o];
      for (std::size_t c = 0; c < c_in; ++c)
        for (std::size_t k = 0; k < 3; ++k) {
          const long src = static_cast<long>(i) + static_cast<long>(k) - 1;
          if (src < 0 || src >= static_cast<long>(len)) continue;
          acc += w[(o * c_in + c) * 3 + k] * x[c * len + static_cast<std::size_t>(src)];
        }
      y[o * len + i] = acc;
    }
  return y;
}

// Single-sample [C, H, W] input, [Co, C, 3, 3] kernels: six nested loops.
inline Tensor<double> conv2d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t c_in = x.dim(0), h = x.dim(1), wd = x.dim(2), c_out = w.dim(0);
  Tensor<double> y(Shape{c_out, h, wd});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < wd; ++c) {
        double acc = b[o];
        for (std::size_t ch = 0; ch < c_in; ++ch)
          for (std::size_t kr = 0; kr < 3; ++kr)
            for (std::size_t kc = 0; kc < 3; ++kc) {
              const long sr = static_cast<long>(r + kr) - 1, sc = static_cast<long>(c + kc) - 1;
              if (sr < 0 || sc < 0 || sr >= static_cast<long>(h) || sc >= static_cast<long>(wd)) continue;
              acc += w[((o * c_in + ch) * 3 + kr) * 3 + kc] *
                     x[(ch * h + static_cast<std::size_t>(sr)) * wd + static_cast<std::size_t>(sc)];
            }
        y[(o * h + r) * wd + c] = acc;
      }
  return y;
}

// Single-sample [C, D, H, W] input, [Co, C, 3, 3, 3] kernels.
inline Tensor<double> conv3d(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b) {
  const std::size_t c_in = x.dim(0), dd = x.dim(1), h = x.dim(2), wd = x.dim(3), c_out = w.dim(0);
  Tensor<double> y(Shape{c_out, dd, h, wd});
  for (std::size_t o = 0; o < c_out; ++o)
    for (std::size_t z = 0; z < dd; ++z)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < wd; ++c) {
          double acc = b[o];
          for (std::size_t ch = 0; ch < c_in; ++ch)
            for (std::size_t kz = 0; kz < 3; ++kz)
              for (std::size_t kr = 0; kr < 3; ++kr)
                for (std::size_t kc = 0; kc < 3; ++kc) {
                  const long sz = static_cast<long>(z + kz) - 1;
                  const long sr = static_cast<long>(r + kr) - 1;
                  const long sc = static_cast<long>(c + kc) - 1;
                  if (sz < 0 || sr < 0 || sc < 0 || sz >= static_cast<long>(dd) || sr >= static_cast<long>(h) ||
                      sc >= static_cast<long>(wd))
                    continue;
                  acc += w[(((o * c_in + ch) * 3 + kz) * 3 + kr) * 3 + kc] *
                         x[((ch * dd + static_cast<std::size_t>(sz)) * h + static_cast<std::size_t>(sr)) * wd +
                           static_cast<std::size_t>(sc)];
                }
          y[((o * dd + z) * h + r) * wd + c] = acc;
        }
  return y;
}

inline double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// One LSTM step with gate blocks ordered (input, forget, cell, output).
// x: [in], h, c: [d]; wx: [in x 4d], wh: [d x 4d], b: [4d].
struct LstmState {
  std::vector<double> h, c;
};
inline LstmState lstm_step(const std::vector<double>& x, const LstmState& prev, const Tensor<double>& wx,
                           const Tensor<double>& wh, const Tensor<double>& b) {
  const std::size_t d = prev.h.size(), in = x.size();
  std::vector<double> z(4 * d);
  for (std::size_t j = 0; j < 4 * d; ++j) {
    double acc = b[j];
    for (std::size_t i = 0; i < in; ++i) acc += x[i] * wx[i * 4 * d + j];
    for (std::size_t i = 0; i < d; ++i) acc += prev.h[i] * wh[i * 4 * d + j];
    z[j] = acc;
  }
  LstmState next{std::vector<double>(d), std::vector<double>(d)};
  for (std::size_t j = 0; j < d; ++j) {
    const double ig = sigmoid(z[j]), fg = sigmoid(z[d + j]), gg = std::tanh(z[2 * d + j]),
                 og = sigmoid(z[3 * d + j]);
    next.c[j] = fg * prev.c[j] + ig * gg;
    next.h[j] = og * std::tanh(next.c[j]);
  }
  return next;
}

}  // namespace oracle
