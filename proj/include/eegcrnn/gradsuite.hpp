#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "eegcrnn/conv.hpp"
#include "eegcrnn/gradcheck.hpp"
#include "eegcrnn/models.hpp"
#include "eegcrnn/ops.hpp"

namespace eegcrnn {

struct GradCase {
  std::string name;
  std::string group;  // "op" or "model"
  std::function<GradCheckResult(std::uint64_t seed)> run;
};

// Reduced model dims used by the suite: S=3, 4x5 mesh, l=8, d=6, v=4, K=3.
inline ModelConfig gradcheck_config(Architecture arch, FusionKind fusion = FusionKind::Concatenate) {
  ModelConfig c;
  c.arch = arch;
  c.fusion = fusion;
  c.window = 3;
  c.rows = 4;
  c.cols = 5;
  c.channels = 6;
  c.fc_width = 8;
  c.hidden = arch == Architecture::Cascade ? 6 : 4;
  c.classes = 3;
  c.conv_maps = 2;
  return c;
}

namespace detail {

inline Tensor<double> uniform_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = lo + (hi - lo) * uniform01(rng);
  return t;
}

// Weighted sum against a fixed random probe, so every output coordinate
// contributes with a distinct coefficient.
inline Var<double> probe_sum(const Var<double>& y, const Tensor<double>& probe) {
  return sum(mul(y, constant(probe)));
}

template <class Build>
GradCase op_case(std::string name, std::vector<Shape> shapes, Build build) {
  return {name, "op", [shapes, build](std::uint64_t seed) {
            std::mt19937_64 rng(seed);
            std::vector<Var<double>> in;
            for (const auto& s : shapes) in.push_back(parameter(uniform_tensor(s, rng)));
            Tensor<double> probe;
            {
              NoGradGuard guard;
              probe = uniform_tensor(build(in).shape(), rng);
            }
            return finite_diff_check<double>([&] { return probe_sum(build(in), probe); }, in);
          }};
}

inline GradCase model_case(std::string name, ModelConfig config) {
  return {name, "model", [config](std::uint64_t seed) {
            auto p = param_init<double>(config, seed);
            std::mt19937_64 rng(seed + 1);
            for (auto& [n, v] : p.named()) {
              if (n.ends_with("bias")) {
                for (auto& x : v.mutable_value().values()) x += 0.4 * uniform01(rng) - 0.2;
              }
            }
            std::vector<WindowSegment> windows(2);
            for (std::size_t i = 0; i < windows.size(); ++i) {
              auto& w = windows[i];
              w.length = config.window;
              w.raw.resize(config.window * config.channels);
              w.meshes.resize(config.window * config.rows * config.cols);
              for (auto& v : w.raw) v = static_cast<float>(2.0 * uniform01(rng) - 1.0);
              for (auto& v : w.meshes) v = static_cast<float>(2.0 * uniform01(rng) - 1.0);
              w.label = static_cast<int>(i % config.classes);
            }
            const std::vector<std::size_t> rows{0, 1};
            const auto batch = make_batch<double>(config, windows, rows);
            auto fn = [&] {
              std::mt19937_64 masks(seed + 2);  // identical dropout masks on every call
              ForwardContext<double> ctx{Mode::Train, &masks};
              return softmax_cross_entropy(forward(batch, p, ctx), batch.labels).loss;
            };
            return finite_diff_check<double>(fn, p.list());
          }};
}

}  // namespace detail

inline std::vector<GradCase> gradient_suite() {
  using detail::op_case;
  using V = std::vector<Var<double>>;
  std::vector<GradCase> cases;
  cases.push_back(op_case("matmul", {{3, 4}, {4, 5}}, [](const V& x) { return matmul(x[0], x[1]); }));
  cases.push_back(op_case("add", {{3, 4}, {3, 4}}, [](const V& x) { return add(x[0], x[1]); }));
  cases.push_back(op_case("add_bias", {{3, 4}, {4}}, [](const V& x) { return add_bias(x[0], x[1]); }));
  cases.push_back(op_case("mul", {{3, 4}, {3, 4}}, [](const V& x) { return mul(x[0], x[1]); }));
  cases.push_back(op_case("scale", {{3, 4}}, [](const V& x) { return scale(x[0], -1.7); }));
  cases.push_back(op_case("elu", {{4, 5}}, [](const V& x) { return elu(scale(x[0], 2.0)); }));
  cases.push_back(op_case("sigmoid", {{4, 5}}, [](const V& x) { return sigmoid(scale(x[0], 3.0)); }));
  cases.push_back(op_case("tanh", {{4, 5}}, [](const V& x) { return tanh(scale(x[0], 2.0)); }));
  cases.push_back(op_case("reshape", {{2, 6}}, [](const V& x) { return reshape(x[0], {3, 4}); }));
  cases.push_back(op_case("concat", {{2, 3}, {2, 4}}, [](const V& x) { return concat(x[0], x[1], 1); }));
  cases.push_back(op_case("slice", {{3, 7}}, [](const V& x) { return slice_last(x[0], 2, 5); }));
  cases.push_back(op_case("time_step", {{6, 4}}, [](const V& x) { return time_step(x[0], 3, 1); }));
  cases.push_back(op_case("stack_steps", {{2, 3}, {2, 3}, {2, 3}},
                          [](const V& x) { return stack_steps(std::vector<Var<double>>{x[0], x[1], x[2]}); }));
  cases.push_back(op_case("sum_steps", {{6, 4}}, [](const V& x) { return sum_steps(x[0], 3); }));
  cases.push_back(op_case("sum", {{3, 4}}, [](const V& x) { return sum(x[0]); }));
  cases.push_back(op_case("dropout", {{4, 6}}, [](const V& x) {
    std::mt19937_64 rng(5);
    return dropout(x[0], 0.5, rng);
  }));
  cases.push_back(op_case("softmax_xent", {{4, 5}}, [](const V& x) {
    const std::vector<int> labels{0, 3, 1, 4};
    return softmax_cross_entropy(scale(x[0], 2.0), labels).loss;
  }));
  cases.push_back(op_case("conv1d", {{2, 2, 7}, {3, 2, 3}, {3}},
                          [](const V& x) { return conv1d_same(x[0], x[1], x[2]); }));
  cases.push_back(op_case("conv2d", {{2, 2, 4, 5}, {3, 2, 3, 3}, {3}},
                          [](const V& x) { return conv2d_same(x[0], x[1], x[2]); }));
  cases.push_back(op_case("conv3d", {{1, 2, 3, 4, 5}, {2, 2, 3, 3, 3}, {2}},
                          [](const V& x) { return conv3d_same(x[0], x[1], x[2]); }));
  cases.push_back(op_case("pointwise", {{2, 2, 5}, {1, 2}, {1}},
                          [](const V& x) { return pointwise_conv(x[0], x[1], x[2]); }));
  cases.push_back(op_case("lstm", {{3 * 2, 5}, {5, 16}, {4, 16}, {16}, {4, 16}, {4, 16}, {16}}, [](const V& x) {
    const std::vector<LstmLayer<double>> layers{{x[1], x[2], x[3]}, {x[4], x[5], x[6]}};
    return lstm_sequence(x[0], std::span<const LstmLayer<double>>(layers), 3);
  }));

  cases.push_back(detail::model_case("cascade", gradcheck_config(Architecture::Cascade)));
  for (auto f : {FusionKind::Concatenate, FusionKind::Add, FusionKind::ConcatDense, FusionKind::ConcatPointwiseConv}) {
    cases.push_back(detail::model_case("parallel:" + to_string(f), gradcheck_config(Architecture::Parallel, f)));
  }
  cases.push_back(detail::model_case("cnn1d", gradcheck_config(Architecture::Cnn1d)));
  cases.push_back(detail::model_case("cnn2d", gradcheck_config(Architecture::Cnn2d)));
  cases.push_back(detail::model_case("cnn3d", gradcheck_config(Architecture::Cnn3d)));
  cases.push_back(detail::model_case("rnn", gradcheck_config(Architecture::Rnn)));
  return cases;
}

inline FaultSite parse_fault_site(const std::string& s) {
  if (s == "none") return FaultSite::None;
  if (s == "elu") return FaultSite::EluBackward;
  if (s == "conv2d") return FaultSite::Conv2dBackward;
  if (s == "matmul") return FaultSite::MatmulBackward;
  throw std::invalid_argument("unknown fault site '" + s + "' (expected none, elu, conv2d or matmul)");
}

}  // namespace eegcrnn
