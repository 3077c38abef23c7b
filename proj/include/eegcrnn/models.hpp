#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eegcrnn/config.hpp"
#include "eegcrnn/conv.hpp"
#include "eegcrnn/dataset.hpp"
#include "eegcrnn/ops.hpp"

namespace eegcrnn {

template <std::floating_point T>
struct Dense {
  Var<T> weight;  // [in x out]
  Var<T> bias;    // [out]
};

template <std::floating_point T>
struct ConvLayer {
  Var<T> kernels;  // [C_out, C_in, 3, ...] or [C_out, C_in] for the pointwise fusion
  Var<T> bias;
};

// Gate blocks are laid out i, f, g, o along the 4*hidden axis.
template <std::floating_point T>
struct LstmLayer {
  Var<T> wx;    // [in x 4h]
  Var<T> wh;    // [h x 4h]
  Var<T> bias;  // [4h]
};

template <std::floating_point T>
struct ModelParams {
  ModelConfig config;
  std::vector<ConvLayer<T>> conv;
  std::optional<Dense<T>> cnn_fc;
  std::optional<Dense<T>> rnn_in;  // dense(n -> l) ahead of the LSTM path
  std::vector<LstmLayer<T>> lstm;
  std::optional<Dense<T>> post_rnn;
  std::optional<Dense<T>> fusion_fc;
  std::optional<ConvLayer<T>> fusion_pw;
  Dense<T> logits;

  // Stable order; used for init, the optimizer and checkpoints.
  std::vector<std::pair<std::string, Var<T>>> named() const {
    std::vector<std::pair<std::string, Var<T>>> out;
    auto dense = [&out](const std::string& name, const Dense<T>& d) {
      out.emplace_back(name + ".weight", d.weight);
      out.emplace_back(name + ".bias", d.bias);
    };
    for (std::size_t i = 0; i < conv.size(); ++i) {
      out.emplace_back("conv" + std::to_string(i + 1) + ".kernels", conv[i].kernels);
      out.emplace_back("conv" + std::to_string(i + 1) + ".bias", conv[i].bias);
    }
    if (cnn_fc) dense("cnn_fc", *cnn_fc);
    if (rnn_in) dense("rnn_in", *rnn_in);
    for (std::size_t i = 0; i < lstm.size(); ++i) {
      const auto p = "lstm" + std::to_string(i + 1);
      out.emplace_back(p + ".wx", lstm[i].wx);
      out.emplace_back(p + ".wh", lstm[i].wh);
      out.emplace_back(p + ".bias", lstm[i].bias);
    }
    if (post_rnn) dense("post_rnn", *post_rnn);
    if (fusion_fc) dense("fusion_fc", *fusion_fc);
    if (fusion_pw) {
      out.emplace_back("fusion_pw.weights", fusion_pw->kernels);
      out.emplace_back("fusion_pw.bias", fusion_pw->bias);
    }
    dense("logits", logits);
    return out;
  }

  std::vector<Var<T>> list() const {
    std::vector<Var<T>> out;
    for (auto& [name, v] : named()) out.push_back(v);
    return out;
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (auto& [name, v] : named()) n += v.size();
    return n;
  }

  // Deep copy onto fresh tape leaves.
  ModelParams clone() const {
    ModelParams c = *this;
    auto fresh = [](Var<T>& v) { v = parameter(v.value()); };
    for (auto& l : c.conv) fresh(l.kernels), fresh(l.bias);
    for (auto* d : {&c.cnn_fc, &c.rnn_in, &c.post_rnn, &c.fusion_fc}) {
      if (*d) fresh((*d)->weight), fresh((*d)->bias);
    }
    for (auto& l : c.lstm) fresh(l.wx), fresh(l.wh), fresh(l.bias);
    if (c.fusion_pw) fresh(c.fusion_pw->kernels), fresh(c.fusion_pw->bias);
    fresh(c.logits.weight), fresh(c.logits.bias);
    return c;
  }
};

namespace detail {

template <std::floating_point T>
Tensor<T> glorot(Shape shape, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& v : t.values()) v = static_cast<T>(bound * (2.0 * uniform01(rng) - 1.0));
  return t;
}

template <std::floating_point T>
Dense<T> init_dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {parameter(glorot<T>({in, out}, in, out, rng)), parameter(Tensor<T>(Shape{out}))};
}

}  // namespace detail

// Glorot-uniform weights, zero biases, forget-gate bias 1.
template <std::floating_point T>
ModelParams<T> param_init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams<T> p;
  p.config = config;
  const auto& c = config;

  if (c.uses_conv()) {
    std::size_t in = 1;
    for (std::size_t out : c.conv_widths()) {
      Shape ks{out, in};
      std::size_t taps = 1;
      for (std::size_t d = 0; d < c.conv_rank(); ++d) ks.push_back(3), taps *= 3;
      p.conv.push_back({parameter(detail::glorot<T>(ks, in * taps, out * taps, rng)), parameter(Tensor<T>(Shape{out}))});
      in = out;
    }
    if (c.cnn_fc) p.cnn_fc = detail::init_dense<T>(c.conv_flat(), c.fc_width, rng);
  }
  if (c.uses_lstm()) {
    std::size_t in = c.conv_flat();
    if (c.arch == Architecture::Cascade) {
      in = c.spatial_features();
    } else {
      p.rnn_in = detail::init_dense<T>(c.channels, c.fc_width, rng);
      in = c.fc_width;
    }
    const std::size_t h = c.hidden;
    for (std::size_t layer = 0; layer < c.lstm_depth; ++layer) {
      LstmLayer<T> l;
      Tensor<T> wx(Shape{in, 4 * h}), wh(Shape{h, 4 * h}), b(Shape{4 * h});
      // each gate block has its own fan-out of h
      for (std::size_t gate = 0; gate < 4; ++gate) {
        auto gx = detail::glorot<T>({in, h}, in, h, rng);
        auto gh = detail::glorot<T>({h, h}, h, h, rng);
        for (std::size_t r = 0; r < in; ++r) {
          for (std::size_t j = 0; j < h; ++j) wx[r * 4 * h + gate * h + j] = gx[r * h + j];
        }
        for (std::size_t r = 0; r < h; ++r) {
          for (std::size_t j = 0; j < h; ++j) wh[r * 4 * h + gate * h + j] = gh[r * h + j];
        }
      }
      for (std::size_t j = 0; j < h; ++j) b[h + j] = T{1};
      l.wx = parameter(std::move(wx));
      l.wh = parameter(std::move(wh));
      l.bias = parameter(std::move(b));
      p.lstm.push_back(std::move(l));
      in = h;
    }
    if (c.post_rnn_fc) p.post_rnn = detail::init_dense<T>(h, c.fc_width, rng);
  }
  if (c.arch == Architecture::Parallel) {
    if (c.fusion == FusionKind::ConcatDense) {
      p.fusion_fc = detail::init_dense<T>(c.spatial_features() + c.temporal_features(), c.fc_width, rng);
    } else if (c.fusion == FusionKind::ConcatPointwiseConv) {
      p.fusion_pw = ConvLayer<T>{parameter(detail::glorot<T>({1, 2}, 2, 1, rng)), parameter(Tensor<T>(Shape{1}))};
    }
  }
  p.logits = detail::init_dense<T>(c.head_features(), c.classes, rng);
  return p;
}

enum class Mode { Train, Eval };

// Dropout only runs in train mode and then needs `rng`.
template <std::floating_point T>
struct ForwardContext {
  Mode mode = Mode::Eval;
  std::mt19937_64* rng = nullptr;

  Var<T> drop(const Var<T>& x, double keep) const {
    if (mode == Mode::Eval || keep == 1.0) return x;
    if (rng == nullptr) throw std::logic_error("train-mode forward needs a dropout generator");
    return dropout(x, keep, *rng);
  }
};

template <std::floating_point T>
Var<T> dense(const Dense<T>& d, const Var<T>& x) {
  return add_bias(matmul(x, d.weight), d.bias);
}

// Conv layers (ELU, same padding) then optionally dense(l) + ELU + dropout.
// x: [N, 1, spatial...] -> [N, features].
template <std::floating_point T>
Var<T> conv_stack_forward(const Var<T>& x, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  const auto& c = p.config;
  if (x.shape().size() != c.conv_rank() + 2 || x.shape()[1] != 1) {
    throw ShapeError("conv stack expects [N, 1, ...] of rank " + std::to_string(c.conv_rank() + 2) + ", got " +
                     shape_str(x.shape()));
  }
  Var<T> h = x;
  for (const auto& layer : p.conv) {
    switch (c.conv_rank()) {
      case 1: h = elu(conv1d_same(h, layer.kernels, layer.bias)); break;
      case 3: h = elu(conv3d_same(h, layer.kernels, layer.bias)); break;
      default: h = elu(conv2d_same(h, layer.kernels, layer.bias)); break;
    }
  }
  const std::size_t n = h.shape()[0];
  h = reshape(h, {n, h.size() / n});
  if (p.cnn_fc) h = ctx.drop(elu(dense(*p.cnn_fc, h)), c.keep_prob);
  return h;
}

// Stacked LSTM over a time-major sequence [steps*B x F]; returns the top
// layer's last hidden state [B x h]. Zero initial state.
template <std::floating_point T>
Var<T> lstm_sequence(const Var<T>& seq, std::span<const LstmLayer<T>> layers, std::size_t steps) {
  if (steps == 0) throw ShapeError("lstm_sequence: empty sequence");
  if (layers.empty()) throw ShapeError("lstm_sequence: no layers");
  Var<T> input = seq;
  Var<T> h;
  for (std::size_t li = 0; li < layers.size(); ++li) {
    const auto& L = layers[li];
    const std::size_t hid = L.wh.shape()[0];
    if (L.wx.shape() != Shape{input.shape().at(1), 4 * hid}) {
      throw ShapeError("lstm layer " + std::to_string(li + 1) + " expects input width " +
                       std::to_string(L.wx.shape()[0]) + ", got " + shape_str(input.shape()));
    }
    const Var<T> projected = matmul(input, L.wx);
    Var<T> cell;
    h = Var<T>();
    std::vector<Var<T>> outputs;
    for (std::size_t t = 0; t < steps; ++t) {
      Var<T> gates = time_step(projected, steps, t);
      if (h) gates = add(gates, matmul(h, L.wh));
      gates = add_bias(gates, L.bias);
      const Var<T> i = sigmoid(slice_last(gates, 0, hid));
      const Var<T> f = sigmoid(slice_last(gates, hid, 2 * hid));
      const Var<T> g = tanh(slice_last(gates, 2 * hid, 3 * hid));
      const Var<T> o = sigmoid(slice_last(gates, 3 * hid, 4 * hid));
      cell = cell ? add(mul(f, cell), mul(i, g)) : mul(i, g);
      h = mul(o, tanh(cell));
      if (li + 1 < layers.size()) outputs.push_back(h);
    }
    if (li + 1 < layers.size()) input = stack_steps(outputs);
  }
  return h;
}

// spatial, temporal: [B x features].
template <std::floating_point T>
Var<T> fuse(const Var<T>& spatial, const Var<T>& temporal, FusionKind kind, const ModelParams<T>* p = nullptr) {
  const bool same = spatial.shape() == temporal.shape();
  if ((kind == FusionKind::Add || kind == FusionKind::ConcatPointwiseConv) && !same) {
    throw ShapeError(to_string(kind) + " fusion needs equal sizes, got " + shape_str(spatial.shape()) + " and " +
                     shape_str(temporal.shape()));
  }
  switch (kind) {
    case FusionKind::Concatenate: return concat(spatial, temporal, 1);
    case FusionKind::Add: return add(spatial, temporal);
    case FusionKind::ConcatDense:
      if (p == nullptr || !p->fusion_fc) throw ShapeError("cat-fc fusion without dense parameters");
      return elu(dense(*p->fusion_fc, concat(spatial, temporal, 1)));
    case FusionKind::ConcatPointwiseConv: {
      if (p == nullptr || !p->fusion_pw) throw ShapeError("cat-conv fusion without pointwise parameters");
      const std::size_t b = spatial.shape()[0], l = spatial.shape()[1];
      const Var<T> stacked = concat(reshape(spatial, {b, 1, l}), reshape(temporal, {b, 1, l}), 1);
      return reshape(pointwise_conv(stacked, p->fusion_pw->kernels, p->fusion_pw->bias), {b, l});
    }
  }
  throw ShapeError("unknown fusion kind");
}

// One batch of windows in the layout each architecture consumes. Sequences
// are time-major (row t*B + b).
template <std::floating_point T>
struct Batch {
  std::size_t size = 0;
  Tensor<T> meshes;  // cascade/parallel [S*B,1,h,w]; cnn2d [B,1,h,w]; cnn3d [B,1,S,h,w]
  Tensor<T> raw;     // parallel/rnn [S*B,n]; cnn1d [B,1,n]
  std::vector<int> labels;
};

inline void check_segment(const ModelConfig& c, const WindowSegment& w) {
  if (w.length != c.window || w.raw.size() != c.window * c.channels ||
      w.meshes.size() != c.window * c.rows * c.cols) {
    throw ShapeError("window of length " + std::to_string(w.length) + " (" + std::to_string(w.raw.size()) +
                     " raw, " + std::to_string(w.meshes.size()) + " mesh values) does not match model input S=" +
                     std::to_string(c.window) + ", n=" + std::to_string(c.channels) + ", mesh " +
                     std::to_string(c.rows) + "x" + std::to_string(c.cols));
  }
}

template <std::floating_point T>
Batch<T> make_batch(const ModelConfig& c, std::span<const WindowSegment> windows,
                    std::span<const std::size_t> indices) {
  const std::size_t b = indices.size();
  const std::size_t s = c.window, n = c.channels, hw = c.rows * c.cols;
  if (b == 0) throw ShapeError("empty batch");
  Batch<T> out;
  out.size = b;
  const bool seq_mesh = c.arch == Architecture::Cascade || c.arch == Architecture::Parallel;
  const bool seq_raw = c.arch == Architecture::Parallel || c.arch == Architecture::Rnn;
  if (seq_mesh) out.meshes = Tensor<T>(Shape{s * b, 1, c.rows, c.cols});
  if (c.arch == Architecture::Cnn2d) out.meshes = Tensor<T>(Shape{b, 1, c.rows, c.cols});
  if (c.arch == Architecture::Cnn3d) out.meshes = Tensor<T>(Shape{b, 1, s, c.rows, c.cols});
  if (seq_raw) out.raw = Tensor<T>(Shape{s * b, n});
  if (c.arch == Architecture::Cnn1d) out.raw = Tensor<T>(Shape{b, 1, n});

  for (std::size_t k = 0; k < b; ++k) {
    const auto& w = windows[indices[k]];
    check_segment(c, w);
    out.labels.push_back(w.label);
    for (std::size_t t = 0; t < s; ++t) {
      const float* mesh = w.meshes.data() + t * hw;
      const float* raw = w.raw.data() + t * n;
      if (seq_mesh) std::copy_n(mesh, hw, out.meshes.data() + (t * b + k) * hw);
      if (seq_raw) std::copy_n(raw, n, out.raw.data() + (t * b + k) * n);
    }
    // single-frame baselines see the last sample of the window
    if (c.arch == Architecture::Cnn2d) std::copy_n(w.meshes.data() + (s - 1) * hw, hw, out.meshes.data() + k * hw);
    if (c.arch == Architecture::Cnn1d) std::copy_n(w.raw.data() + (s - 1) * n, n, out.raw.data() + k * n);
    if (c.arch == Architecture::Cnn3d) std::copy_n(w.meshes.data(), s * hw, out.meshes.data() + k * s * hw);
  }
  return out;
}

template <std::floating_point T>
Var<T> temporal_path(const Var<T>& raw, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  const auto& c = p.config;
  Var<T> h = lstm_sequence(elu(dense(*p.rnn_in, raw)), std::span<const LstmLayer<T>>(p.lstm), c.window);
  if (p.post_rnn) h = ctx.drop(elu(dense(*p.post_rnn, h)), c.keep_prob);
  return h;
}

template <std::floating_point T>
Var<T> cascade_forward(const Batch<T>& batch, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  const auto& c = p.config;
  const Var<T> features = conv_stack_forward(constant(batch.meshes), p, ctx);
  Var<T> h = lstm_sequence(features, std::span<const LstmLayer<T>>(p.lstm), c.window);
  if (p.post_rnn) h = ctx.drop(elu(dense(*p.post_rnn, h)), c.keep_prob);
  return dense(p.logits, h);
}

// Spatial features L_j: per-step conv features summed over the window.
template <std::floating_point T>
Var<T> parallel_spatial(const Batch<T>& batch, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  return sum_steps(conv_stack_forward(constant(batch.meshes), p, ctx), p.config.window);
}

template <std::floating_point T>
Var<T> parallel_forward(const Batch<T>& batch, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  const Var<T> spatial = parallel_spatial(batch, p, ctx);
  const Var<T> temporal = temporal_path(constant(batch.raw), p, ctx);
  return dense(p.logits, fuse(spatial, temporal, p.config.fusion, &p));
}

template <std::floating_point T>
Var<T> baseline_forward(const Batch<T>& batch, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  switch (p.config.arch) {
    case Architecture::Cnn1d: return dense(p.logits, conv_stack_forward(constant(batch.raw), p, ctx));
    case Architecture::Cnn2d:
    case Architecture::Cnn3d: return dense(p.logits, conv_stack_forward(constant(batch.meshes), p, ctx));
    case Architecture::Rnn: return dense(p.logits, temporal_path(constant(batch.raw), p, ctx));
    default: throw std::invalid_argument(to_string(p.config.arch) + " is not a baseline architecture");
  }
}

// Logits [B x K] for any architecture.
template <std::floating_point T>
Var<T> forward(const Batch<T>& batch, const ModelParams<T>& p, const ForwardContext<T>& ctx) {
  switch (p.config.arch) {
    case Architecture::Cascade: return cascade_forward(batch, p, ctx);
    case Architecture::Parallel: return parallel_forward(batch, p, ctx);
    default: return baseline_forward(batch, p, ctx);
  }
}

}  // namespace eegcrnn
