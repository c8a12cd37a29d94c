#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "layoutforge/errors.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// Index of a cell class within its dataset's `cell_types` list.
struct CellTypeId {
  std::size_t index = 0;
  friend auto operator<=>(const CellTypeId&, const CellTypeId&) = default;
};

struct Cell {
  double x = 0.0;
  double y = 0.0;
  CellTypeId type;
};

/// One annotated patch: typed cell centers in pixel coordinates.
struct PointPattern {
  std::string patch_id;
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;

  std::size_t count_of(CellTypeId t) const {
    return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [&](const Cell& c) { return c.type == t; }));
  }

  /// Throws ValidationError naming the patch on any broken invariant.
  void validate(std::size_t num_types) const {
    if (width <= 0 || height <= 0) throw ValidationError(patch_id, "width and height must be positive");
    for (std::size_t k = 0; k < cells.size(); ++k) {
      const Cell& c = cells[k];
      if (!(c.x >= 0.0 && c.x < width && c.y >= 0.0 && c.y < height))
        throw ValidationError(patch_id, "cell " + std::to_string(k) + " at (" + std::to_string(c.x) + ", " +
                                            std::to_string(c.y) + ") lies outside the " + std::to_string(width) + "x" +
                                            std::to_string(height) + " patch");
      if (c.type.index >= num_types)
        throw ValidationError(patch_id, "cell " + std::to_string(k) + " has unknown type " + std::to_string(c.type.index));
    }
  }
};

struct GridSize {
  std::size_t height = 64;
  std::size_t width = 64;
  friend bool operator==(const GridSize&, const GridSize&) = default;
};

/// Grid cell (row, col) a pixel-space point falls into after scaling to the grid.
inline std::pair<std::size_t, std::size_t> grid_position(const Cell& cell, int width, int height, GridSize grid) {
  auto to_index = [](double v, double extent, std::size_t n) {
    const double scaled = std::floor(v * static_cast<double>(n) / extent);
    return static_cast<std::size_t>(std::clamp(scaled, 0.0, static_cast<double>(n - 1)));
  };
  return {to_index(cell.y, height, grid.height), to_index(cell.x, width, grid.width)};
}

/// One binary channel per type; each cell becomes a 3x3 marker clipped at the border.
inline Tensor rasterize_layout(const PointPattern& pattern, GridSize grid, std::size_t num_types) {
  if (grid.height == 0 || grid.width == 0) throw ArgumentError("rasterize_layout: grid dimensions must be positive");
  if (pattern.width <= 0 || pattern.height <= 0) throw ArgumentError("rasterize_layout: pattern has empty extent");
  Tensor out({num_types, grid.height, grid.width});
  const auto h = static_cast<std::ptrdiff_t>(grid.height);
  const auto w = static_cast<std::ptrdiff_t>(grid.width);
  for (const Cell& cell : pattern.cells) {
    if (cell.type.index >= num_types) throw ArgumentError("rasterize_layout: cell type out of range");
    const auto [row, col] = grid_position(cell, pattern.width, pattern.height, grid);
    for (std::ptrdiff_t di = -1; di <= 1; ++di) {
      for (std::ptrdiff_t dj = -1; dj <= 1; ++dj) {
        const std::ptrdiff_t i = static_cast<std::ptrdiff_t>(row) + di;
        const std::ptrdiff_t j = static_cast<std::ptrdiff_t>(col) + dj;
        if (i < 0 || j < 0 || i >= h || j >= w) continue;
        out.at(cell.type.index, static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = 1.0;
      }
    }
  }
  return out;
}

namespace detail {

// Center of a marker along one axis. A marker clipped by the border spans fewer
// than 3 pixels, and its center is the pixel adjacent to the clipped side.
inline std::size_t marker_center(std::size_t lo, std::size_t hi, double centroid, std::size_t extent) {
  const std::size_t span = hi - lo + 1;
  if (span < 3 && extent >= 3) {
    if (lo == 0) return hi - (span == 2 ? 1 : 0);
    if (hi == extent - 1) return lo + (span == 2 ? 1 : 0);
  }
  return static_cast<std::size_t>(std::lround(centroid));
}

}  // namespace detail

/// Reads cells back out of layout channels: threshold, 8-connected components,
/// one cell per component at its center. Cells are placed at grid-cell centers
/// (col + 0.5, row + 0.5) in a pattern whose extent is the grid itself.
inline PointPattern derasterize_layout(const Tensor& channels, double threshold, std::string patch_id = "") {
  if (!(threshold > 0.0 && threshold < 1.0)) throw ArgumentError("derasterize_layout: threshold must lie in (0, 1)");
  const auto [num_types, h, w] = channels.shape();
  PointPattern out{std::move(patch_id), static_cast<int>(w), static_cast<int>(h), {}};
  std::vector<char> seen(h * w);
  std::vector<std::size_t> stack;
  for (std::size_t c = 0; c < num_types; ++c) {
    std::fill(seen.begin(), seen.end(), 0);
    for (std::size_t start = 0; start < h * w; ++start) {
      if (seen[start] || !(channels.at(c, start / w, start % w) >= threshold)) continue;
      std::size_t min_i = h, max_i = 0, min_j = w, max_j = 0, n = 0;
      double sum_i = 0.0, sum_j = 0.0;
      stack.assign(1, start);
      seen[start] = 1;
      while (!stack.empty()) {
        const std::size_t p = stack.back();
        stack.pop_back();
        const std::size_t i = p / w, j = p % w;
        ++n;
        sum_i += static_cast<double>(i);
        sum_j += static_cast<double>(j);
        min_i = std::min(min_i, i), max_i = std::max(max_i, i);
        min_j = std::min(min_j, j), max_j = std::max(max_j, j);
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            const auto ni = static_cast<std::ptrdiff_t>(i) + di;
            const auto nj = static_cast<std::ptrdiff_t>(j) + dj;
            if (ni < 0 || nj < 0 || ni >= static_cast<std::ptrdiff_t>(h) || nj >= static_cast<std::ptrdiff_t>(w)) continue;
            const std::size_t q = static_cast<std::size_t>(ni) * w + static_cast<std::size_t>(nj);
            if (seen[q] || !(channels.at(c, q / w, q % w) >= threshold)) continue;
            seen[q] = 1;
            stack.push_back(q);
          }
        }
      }
      const double cn = static_cast<double>(n);
      const std::size_t row = detail::marker_center(min_i, max_i, sum_i / cn, h);
      const std::size_t col = detail::marker_center(min_j, max_j, sum_j / cn, w);
      out.cells.push_back({static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5, CellTypeId{c}});
    }
  }
  return out;
}

/// Type-7 empirical quantile (linear interpolation between order statistics) of sorted data.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw ArgumentError("quantile of empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

/// Quantile binning of per-patch cell counts into K counting categories.
///
/// Bin i covers (C_{i/K}, C_{(i+1)/K}], with the first bin also taking everything
/// at or below its upper edge. A count equal to a boundary goes to the lower bin.
class CountingCategorizer {
public:
  CountingCategorizer() = default;
  CountingCategorizer(std::size_t k, std::vector<double> boundaries) : k_(k), boundaries_(std::move(boundaries)) {
    if (k_ == 0) throw ArgumentError("counting categorizer needs k >= 1");
    if (boundaries_.size() != k_ - 1) throw ArgumentError("counting categorizer needs exactly k - 1 boundaries");
    if (!std::is_sorted(boundaries_.begin(), boundaries_.end()))
      throw ArgumentError("counting categorizer boundaries must be non-decreasing");
  }

  static CountingCategorizer fit(const std::vector<std::size_t>& counts, int k) {
    if (k <= 0) throw ArgumentError("fit_categorizer: k must be >= 1, got " + std::to_string(k));
    if (counts.empty()) throw ArgumentError("fit_categorizer: counts must be non-empty");
    std::vector<double> sorted(counts.begin(), counts.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> bounds;
    for (int i = 1; i < k; ++i) bounds.push_back(quantile_sorted(sorted, static_cast<double>(i) / k));
    return {static_cast<std::size_t>(k), std::move(bounds)};
  }

  std::size_t categorize(std::size_t count) const {
    const double c = static_cast<double>(count);
    return static_cast<std::size_t>(std::lower_bound(boundaries_.begin(), boundaries_.end(), c) - boundaries_.begin());
  }

  std::size_t k() const noexcept { return k_; }
  const std::vector<double>& boundaries() const noexcept { return boundaries_; }

private:
  std::size_t k_ = 1;
  std::vector<double> boundaries_;
};

}  // namespace layoutforge
