#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace eegcrnn {

// Placement of electrode channels on a rows x cols grid. Cells hold a
// 1-based channel index or 0 for a null electrode.
class ElectrodeLayout {
 public:
  ElectrodeLayout(std::size_t rows, std::size_t cols, std::vector<int> cells) : rows_(rows), cols_(cols), cells_(std::move(cells)) {
    if (cells_.size() != rows_ * cols_) {
      throw std::invalid_argument("layout has " + std::to_string(cells_.size()) + " cells, expected " +
                                  std::to_string(rows_ * cols_));
    }
    int top = 0;
    for (int c : cells_) {
      if (c < 0) throw std::invalid_argument("negative channel index in layout");
      top = std::max(top, c);
    }
    cell_of_channel_.assign(static_cast<std::size_t>(top), npos);
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      if (cells_[i] == 0) continue;
      auto& slot = cell_of_channel_[static_cast<std::size_t>(cells_[i] - 1)];
      if (slot != npos) throw std::invalid_argument("channel " + std::to_string(cells_[i]) + " placed twice");
      slot = i;
    }
    for (std::size_t ch = 0; ch < cell_of_channel_.size(); ++ch) {
      if (cell_of_channel_[ch] == npos) throw std::invalid_argument("channel " + std::to_string(ch + 1) + " not placed");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t cells() const { return cells_.size(); }
  std::size_t channels() const { return cell_of_channel_.size(); }

  // 1-based channel at (row, col), or nullopt for a null electrode.
  std::optional<int> channel_at(std::size_t row, std::size_t col) const {
    const int c = cells_.at(row * cols_ + col);
    if (c == 0) return std::nullopt;
    return c;
  }

  // Flat cell index of a 0-based channel.
  std::size_t cell_of(std::size_t channel) const { return cell_of_channel_.at(channel); }
  bool is_null(std::size_t cell) const { return cells_.at(cell) == 0; }
  std::span<const int> cell_map() const { return cells_; }

 private:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::size_t rows_, cols_;
  std::vector<int> cells_;
  std::vector<std::size_t> cell_of_channel_;
};

// The 64-channel 10x11 montage used by the BCI2000 motor-imagery recordings.
// Row 1 prints channel 28 twice in the source figure; the second occurrence
// is channel 29, which is otherwise unplaced.
inline const ElectrodeLayout& layout_default() {
  static const ElectrodeLayout layout(10, 11, {
      0,  0,  0,  0,  22, 23, 24, 0,  0,  0,  0,   //
      0,  0,  0,  25, 26, 27, 28, 29, 0,  0,  0,   //
      0,  30, 31, 32, 33, 34, 35, 36, 37, 38, 0,   //
      0,  39, 1,  2,  3,  4,  5,  6,  7,  40, 0,   //
      43, 41, 8,  9,  10, 11, 12, 13, 14, 42, 44,  //
      0,  45, 15, 16, 17, 18, 19, 20, 21, 46, 0,   //
      0,  47, 48, 49, 50, 51, 52, 53, 54, 55, 0,   //
      0,  0,  0,  56, 57, 58, 59, 60, 0,  0,  0,   //
      0,  0,  0,  0,  61, 62, 63, 0,  0,  0,  0,   //
      0,  0,  0,  0,  0,  64, 0,  0,  0,  0,  0,
  });
  return layout;
}

template <class T>
struct MeshFrame {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> values;  // row-major, null cells are 0
};

template <class T>
MeshFrame<T> to_mesh(std::span<const T> sample, const ElectrodeLayout& layout) {
  if (sample.size() != layout.channels()) {
    throw std::invalid_argument("sample has " + std::to_string(sample.size()) + " channels, layout expects " +
                                std::to_string(layout.channels()));
  }
  MeshFrame<T> mesh{layout.rows(), layout.cols(), std::vector<T>(layout.cells(), T{0})};
  for (std::size_t ch = 0; ch < sample.size(); ++ch) mesh.values[layout.cell_of(ch)] = sample[ch];
  return mesh;
}

template <class T>
std::vector<T> from_mesh(const MeshFrame<T>& mesh, const ElectrodeLayout& layout) {
  if (mesh.values.size() != layout.cells()) throw std::invalid_argument("mesh size does not match layout");
  for (std::size_t i = 0; i < mesh.values.size(); ++i) {
    if (layout.is_null(i) && mesh.values[i] != T{0}) {
      throw std::invalid_argument("null cell " + std::to_string(i) + " holds a non-zero value");
    }
  }
  std::vector<T> sample(layout.channels());
  for (std::size_t ch = 0; ch < sample.size(); ++ch) sample[ch] = mesh.values[layout.cell_of(ch)];
  return sample;
}

// Z-score over the layout-occupied cells (population std). Null cells stay
// 0; a near-constant mesh (std < 1e-8) maps to all zeros.
template <class T>
MeshFrame<T> zscore_mesh(const MeshFrame<T>& mesh, const ElectrodeLayout& layout) {
  if (mesh.values.size() != layout.cells()) throw std::invalid_argument("mesh size does not match layout");
  const std::size_t n = layout.channels();
  double mean = 0.0;
  for (std::size_t ch = 0; ch < n; ++ch) mean += static_cast<double>(mesh.values[layout.cell_of(ch)]);
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t ch = 0; ch < n; ++ch) {
    const double d = static_cast<double>(mesh.values[layout.cell_of(ch)]) - mean;
    var += d * d;
  }
  const double sd = std::sqrt(var / static_cast<double>(n));
  MeshFrame<T> out{mesh.rows, mesh.cols, std::vector<T>(mesh.values.size(), T{0})};
  if (sd < 1e-8) return out;
  for (std::size_t ch = 0; ch < n; ++ch) {
    const std::size_t cell = layout.cell_of(ch);
    out.values[cell] = static_cast<T>((static_cast<double>(mesh.values[cell]) - mean) / sd);
  }
  return out;
}

}  // namespace eegcrnn
