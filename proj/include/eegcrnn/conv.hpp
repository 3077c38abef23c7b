#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "eegcrnn/ops.hpp"

namespace eegcrnn {

namespace detail {

// For each output position p and kernel tap k, the flat input position read
// by a stride-1, pad-1, extent-3 kernel, or -1 when the tap lands in padding.
template <std::size_t R>
std::vector<std::ptrdiff_t> same_padding_taps(const std::array<std::size_t, R>& extents) {
  std::size_t positions = 1, taps = 1;
  for (auto e : extents) positions *= e;
  for (std::size_t i = 0; i < R; ++i) taps *= 3;
  std::vector<std::ptrdiff_t> table(positions * taps);
  std::array<std::size_t, R> coord{};
  for (std::size_t p = 0; p < positions; ++p) {
    std::size_t rem = p;
    for (std::size_t d = R; d-- > 0;) {
      coord[d] = rem % extents[d];
      rem /= extents[d];
    }
    for (std::size_t k = 0; k < taps; ++k) {
      std::size_t krem = k;
      std::ptrdiff_t flat = 0;
      bool inside = true;
      std::array<std::ptrdiff_t, R> src{};
      for (std::size_t d = R; d-- > 0;) {
        src[d] = static_cast<std::ptrdiff_t>(coord[d]) + static_cast<std::ptrdiff_t>(krem % 3) - 1;
        krem /= 3;
        inside = inside && src[d] >= 0 && src[d] < static_cast<std::ptrdiff_t>(extents[d]);
      }
      if (inside) {
        for (std::size_t d = 0; d < R; ++d) flat = flat * static_cast<std::ptrdiff_t>(extents[d]) + src[d];
      }
      table[p * taps + k] = inside ? flat : -1;
    }
  }
  return table;
}

}  // namespace detail

// Stride-1 convolution with extent-3 kernels and zero padding of 1 on every
// border, so output extents equal input extents. Accepts [C, D...] or
// batched [N, C, D...] input; kernels are [C_out, C_in, 3...].
template <std::size_t R, std::floating_point T>
Var<T> conv_same(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias) {
  static_assert(R >= 1 && R <= 3);
  const auto& is = input.shape();
  const auto& ks = kernels.shape();
  const bool batched = is.size() == R + 2;
  if (!batched && is.size() != R + 1) {
    throw ShapeError("conv" + std::to_string(R) + "d input must be [C, D...] or [N, C, D...], got " + shape_str(is));
  }
  bool kernel_ok = ks.size() == R + 2;
  for (std::size_t d = 0; kernel_ok && d < R; ++d) kernel_ok = ks[2 + d] == 3;
  if (!kernel_ok) throw ShapeError("conv" + std::to_string(R) + "d kernels must be [C_out, C_in, 3...], got " + shape_str(ks));
  const std::size_t off = batched ? 1 : 0;
  const std::size_t batch = batched ? is[0] : 1;
  const std::size_t channels = is[off];
  if (ks[1] != channels) {
    throw ShapeError("conv" + std::to_string(R) + "d channel mismatch: input has " + std::to_string(channels) +
                     " channels, kernels expect " + std::to_string(ks[1]));
  }
  const std::size_t out_channels = ks[0];
  if (bias.shape() != Shape{out_channels}) {
    throw ShapeError("conv bias must be [" + std::to_string(out_channels) + "], got " + shape_str(bias.shape()));
  }
  std::array<std::size_t, R> extents{};
  std::size_t positions = 1, taps = 1;
  for (std::size_t d = 0; d < R; ++d) {
    extents[d] = is[off + 1 + d];
    positions *= extents[d];
    taps *= 3;
  }
  const auto table = detail::same_padding_taps<R>(extents);
  const std::size_t patch = channels * taps;

  Tensor<T> col(Shape{batch * positions, patch});
  const T* in = input.value().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t p = 0; p < positions; ++p) {
      T* row = col.data() + (n * positions + p) * patch;
      const std::ptrdiff_t* tap = table.data() + p * taps;
      for (std::size_t c = 0; c < channels; ++c) {
        const T* plane = in + (n * channels + c) * positions;
        for (std::size_t k = 0; k < taps; ++k) row[c * taps + k] = tap[k] >= 0 ? plane[tap[k]] : T{0};
      }
    }
  }

  Tensor<T> out_mat(Shape{batch * positions, out_channels});
  detail::gemm(col.data(), batch * positions, patch, false, kernels.value().data(), out_channels, patch, true,
               out_mat.data(), false);
  Shape out_shape = is;
  out_shape[off] = out_channels;
  Tensor<T> out(out_shape);
  const T* b = bias.value().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t co = 0; co < out_channels; ++co) {
      T* dst = out.data() + (n * out_channels + co) * positions;
      for (std::size_t p = 0; p < positions; ++p) dst[p] = out_mat[(n * positions + p) * out_channels + co] + b[co];
    }
  }

  return make_result<T>(
      std::move(out), {input, kernels, bias},
      [col = std::move(col), table, batch, channels, out_channels, positions, taps, patch](Node<T>& self) {
        auto& ni = *self.parents[0];
        auto& nk = *self.parents[1];
        auto& nb = *self.parents[2];
        Tensor<T> gmat(Shape{batch * positions, out_channels});
        for (std::size_t n = 0; n < batch; ++n) {
          for (std::size_t co = 0; co < out_channels; ++co) {
            const T* src = self.grad.data() + (n * out_channels + co) * positions;
            for (std::size_t p = 0; p < positions; ++p) gmat[(n * positions + p) * out_channels + co] = src[p];
          }
        }
        if (nk.requires_grad) {
          detail::gemm(gmat.data(), batch * positions, out_channels, true, col.data(), batch * positions, patch,
                       false, nk.grad_buffer().data(), true);
        }
        if (nb.requires_grad) {
          T* gb = nb.grad_buffer().data();
          for (std::size_t i = 0; i < gmat.size(); ++i) gb[i % out_channels] += gmat[i];
        }
        if (ni.requires_grad) {
          Tensor<T> dcol(Shape{batch * positions, patch});
          detail::gemm(gmat.data(), batch * positions, out_channels, false, nk.value.data(), out_channels, patch,
                       false, dcol.data(), false);
          const T sign = (R == 2 && injected_fault() == FaultSite::Conv2dBackward) ? T{-1} : T{1};
          T* gi = ni.grad_buffer().data();
          for (std::size_t n = 0; n < batch; ++n) {
            for (std::size_t p = 0; p < positions; ++p) {
              const T* row = dcol.data() + (n * positions + p) * patch;
              const std::ptrdiff_t* tap = table.data() + p * taps;
              for (std::size_t c = 0; c < channels; ++c) {
                T* plane = gi + (n * channels + c) * positions;
                for (std::size_t k = 0; k < taps; ++k) {
                  if (tap[k] >= 0) plane[tap[k]] += sign * row[c * taps + k];
                }
              }
            }
          }
        }
      });
}

template <std::floating_point T>
Var<T> conv1d_same(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias) {
  return conv_same<1>(input, kernels, bias);
}

template <std::floating_point T>
Var<T> conv2d_same(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias) {
  return conv_same<2>(input, kernels, bias);
}

template <std::floating_point T>
Var<T> conv3d_same(const Var<T>& input, const Var<T>& kernels, const Var<T>& bias) {
  return conv_same<3>(input, kernels, bias);
}

// 1x1 convolution over a [N, C_in, L] feature map with weights [C_out, C_in].
template <std::floating_point T>
Var<T> pointwise_conv(const Var<T>& input, const Var<T>& weights, const Var<T>& bias) {
  const auto& is = input.shape();
  const auto& ws = weights.shape();
  if (is.size() != 3 || ws.size() != 2 || ws[1] != is[1] || bias.shape() != Shape{ws[0]}) {
    throw ShapeError("pointwise_conv shape mismatch: input " + shape_str(is) + ", weights " + shape_str(ws) +
                     ", bias " + shape_str(bias.shape()));
  }
  const std::size_t batch = is[0], cin = is[1], len = is[2], cout = ws[0];
  Tensor<T> out(Shape{batch, cout, len});
  const T* x = input.value().data();
  const T* w = weights.value().data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t o = 0; o < cout; ++o) {
      T* dst = out.data() + (n * cout + o) * len;
      for (std::size_t l = 0; l < len; ++l) dst[l] = bias.value()[o];
      for (std::size_t c = 0; c < cin; ++c) {
        const T* src = x + (n * cin + c) * len;
        for (std::size_t l = 0; l < len; ++l) dst[l] += w[o * cin + c] * src[l];
      }
    }
  }
  return make_result<T>(std::move(out), {input, weights, bias}, [batch, cin, len, cout](Node<T>& self) {
    auto& ni = *self.parents[0];
    auto& nw = *self.parents[1];
    auto& nb = *self.parents[2];
    const T* g = self.grad.data();
    for (std::size_t n = 0; n < batch; ++n) {
      for (std::size_t o = 0; o < cout; ++o) {
        const T* go = g + (n * cout + o) * len;
        if (nb.requires_grad) {
          for (std::size_t l = 0; l < len; ++l) nb.grad_buffer()[o] += go[l];
        }
        for (std::size_t c = 0; c < cin; ++c) {
          const T* src = ni.value.data() + (n * cin + c) * len;
          if (nw.requires_grad) {
            T acc{0};
            for (std::size_t l = 0; l < len; ++l) acc += go[l] * src[l];
            nw.grad_buffer()[o * cin + c] += acc;
          }
          if (ni.requires_grad) {
            T* gi = ni.grad_buffer().data() + (n * cin + c) * len;
            const T wv = nw.value[o * cin + c];
            for (std::size_t l = 0; l < len; ++l) gi[l] += wv * go[l];
          }
        }
      }
    }
  });
}

}  // namespace eegcrnn
