#pragma once

// Rasterization of per-object attention onto a square grid and exact Earth
// Mover's Distance between normalized grids.

#include <span>
#include <vector>

namespace relcap::attn {

inline constexpr int kGridSize = 14;

// Normalized box: top-left corner (x, y) and extent (w, h), all in [0, 1].
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  friend bool operator==(const Box&, const Box&) = default;
};

// Row-major size x size nonnegative masses; row index follows y, column x.
struct AttentionGrid {
  int size = kGridSize;
  std::vector<double> cells = std::vector<double>(static_cast<std::size_t>(kGridSize * kGridSize), 0.0);

  AttentionGrid() = default;
  explicit AttentionGrid(int n) : size(n), cells(static_cast<std::size_t>(n * n), 0.0) {}

  [[nodiscard]] double& at(int row, int col) { return cells[static_cast<std::size_t>(row * size + col)]; }
  [[nodiscard]] double at(int row, int col) const { return cells[static_cast<std::size_t>(row * size + col)]; }
  [[nodiscard]] double total() const;
  // Scales to unit mass; throws when the total mass is zero.
  void normalize();
};

// Each box's weight is spread over the cells it overlaps in proportion to
// the overlap area. Overlapping boxes add up. No normalization.
AttentionGrid rasterize_raw(std::span<const Box> boxes, std::span<const double> weights, int grid = kGridSize);
// rasterize_raw followed by normalize().
AttentionGrid rasterize(std::span<const Box> boxes, std::span<const double> weights, int grid = kGridSize);

// Euclidean distance between cell centers in units of one cell side.
double ground_distance(int grid, int cell_a, int cell_b);

// Exact optimal transport cost between two unit-mass grids of equal size
// under ground_distance. Cells with mass <= 1e-12 are dropped before
// solving, which is done as a min-cost flow on the bipartite
// supply/demand graph (successive shortest paths with integer-scaled
// reduced costs). Throws if either grid's mass deviates from 1 by > 1e-6.
double emd(const AttentionGrid& p, const AttentionGrid& q);

}  // namespace relcap::attn
