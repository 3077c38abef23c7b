#pragma once

#include <random>
#include <vector>

#include "eegcrnn/config.hpp"
#include "eegcrnn/dataset.hpp"

namespace fixture {

using namespace eegcrnn;

// Reduced dims for gradient checks: S=3, 4x5 mesh, l=8, d=6, v=4, K=3.
inline ModelConfig tiny(Architecture arch, FusionKind fusion = FusionKind::Concatenate) {
  ModelConfig c;
  c.arch = arch;
  c.fusion = fusion;
  c.window = 3;
  c.rows = 4;
  c.cols = 5;
  c.channels = 7;
  c.fc_width = 8;
  c.hidden = arch == Architecture::Cascade ? 6 : 4;
  c.classes = 3;
  c.conv_maps = 2;
  return c;
}

// Full-size inputs (S=10, 10x11 mesh, 64 channels) with narrow layers.
inline ModelConfig narrow(Architecture arch, FusionKind fusion = FusionKind::Concatenate) {
  ModelConfig c;
  c.arch = arch;
  c.fusion = fusion;
  c.conv_maps = 2;
  c.fc_width = 16;
  c.hidden = 8;
  return c;
}

inline std::vector<WindowSegment> random_windows(const ModelConfig& c, std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> gauss(0.0f, 1.0f);
  std::vector<WindowSegment> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto& w = out[i];
    w.length = c.window;
    w.raw.resize(c.window * c.channels);
    w.meshes.resize(c.window * c.rows * c.cols);
    for (auto& v : w.raw) v = gauss(rng);
    for (auto& v : w.meshes) v = gauss(rng);
    w.label = static_cast<int>(i % c.classes);
  }
  return out;
}

inline std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

}  // namespace fixture
