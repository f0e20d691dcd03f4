#pragma once

#include "ctxkernel/common.hpp"

#include <array>
#include <cstdlib>
#include <string_view>
#include <vector>

namespace ctxkernel {

// W x H lattice of cells, indexed row-major: cell i sits at (i / W, i % W).
struct GridSpec {
  int width = 1;
  int height = 1;

  GridSpec() = default;
  GridSpec(int w, int h) : width(w), height(h) {
    if (w < 1 || h < 1) throw Error(ErrorKind::BadValue, "grid dimensions must be positive");
  }

  int cells() const noexcept { return width * height; }
  int row(int cell) const noexcept { return cell / width; }
  int col(int cell) const noexcept { return cell % width; }
  int index(int r, int c) const noexcept { return r * width + c; }

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

// Fixed direction order; serialized context matrices depend on it.
enum class Direction : int { Above = 0, Below = 1, Left = 2, Right = 3 };

inline constexpr int kDirections = 4;
inline constexpr std::array<std::string_view, kDirections> kDirectionNames = {"above", "below", "left", "right"};

inline std::string_view direction_name(int c) { return kDirectionNames.at(static_cast<std::size_t>(c)); }

inline int parse_direction(std::string_view name) {
  for (int c = 0; c < kDirections; ++c)
    if (kDirectionNames[static_cast<std::size_t>(c)] == name) return c;
  throw Error(ErrorKind::BadValue, "unknown direction '" + std::string(name) + "'");
}

// Typed, radius-bounded adjacency over the grid. masks[c](x, x') == 1 iff x'
// lies in direction c of x at axis distance <= radius (other axis offset 0).
struct NeighborhoodSystem {
  GridSpec grid;
  int radius = 1;
  std::vector<Matrix> masks;  // kDirections entries, 0/1 valued, n x n

  int cells() const noexcept { return grid.cells(); }
  int directions() const noexcept { return static_cast<int>(masks.size()); }

  // Number of true entries of one direction mask.
  Index support_size(int c) const { return static_cast<Index>(masks.at(static_cast<std::size_t>(c)).sum()); }
};

inline NeighborhoodSystem build_neighborhood(const GridSpec& grid, int radius) {
  if (radius < 1) throw Error(ErrorKind::BadValue, "neighborhood radius must be >= 1");
  const int n = grid.cells();
  NeighborhoodSystem hood;
  hood.grid = grid;
  hood.radius = radius;
  hood.masks.assign(kDirections, Matrix::Zero(n, n));
  for (int x = 0; x < n; ++x) {
    const int r = grid.row(x);
    const int c = grid.col(x);
    for (int d = 1; d <= radius; ++d) {
      if (r - d >= 0) hood.masks[0](x, grid.index(r - d, c)) = 1.0;
      if (r + d < grid.height) hood.masks[1](x, grid.index(r + d, c)) = 1.0;
      if (c - d >= 0) hood.masks[2](x, grid.index(r, c - d)) = 1.0;
      if (c + d < grid.width) hood.masks[3](x, grid.index(r, c + d)) = 1.0;
    }
  }
  return hood;
}

}  // namespace ctxkernel
