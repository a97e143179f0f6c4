#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace mrtumor {

// Canonical in-plane grid and slice counts used throughout the pipeline.
inline constexpr int kGridSize = 64;
inline constexpr int kResampledSlices = 16;
inline constexpr int kStackSlices = 12;
inline constexpr int kTrimmedPerEnd = 2;

/// Row-major 2-D grid of real intensities. Row = y, column = x.
struct Image {
  int rows = 0;
  int cols = 0;
  std::vector<double> px;

  Image() = default;
  Image(int r, int c, double fill = 0.0)
      : rows(r), cols(c), px(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return px[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return px[static_cast<std::size_t>(r) * cols + c]; }

  bool operator==(const Image&) const = default;
};

/// Row-major boolean grid; one byte per cell.
struct Mask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(int r, int c) : rows(r), cols(c), cells(static_cast<std::size_t>(r) * c, 0) {}

  bool at(int r, int c) const { return cells[static_cast<std::size_t>(r) * cols + c] != 0; }
  void set(int r, int c, bool v = true) {
    cells[static_cast<std::size_t>(r) * cols + c] = v ? 1 : 0;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto c : cells) n += c;
    return n;
  }
  bool empty() const { return count() == 0; }

  bool operator==(const Mask&) const = default;
};

Image mirror_columns(const Image& img);
Mask mirror_columns(const Mask& m);

}  // namespace mrtumor
