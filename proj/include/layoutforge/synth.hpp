#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "layoutforge/io.hpp"
#include "layoutforge/layout.hpp"
#include "layoutforge/random.hpp"

namespace layoutforge {

struct SynthOptions {
  std::size_t patches = 80;
  int size = 464;
  std::size_t min_cells = 20;
  std::size_t max_cells = 160;
  /// Clustered patterns; otherwise every cell is uniform over the patch.
  bool clustered = true;
  std::uint64_t seed = 0;
};

/// Synthetic three-type dataset (tumor, lymph, stromal).
///
/// In clustered mode the layout depends on the patch's cell count: denser patches
/// get more and tighter tumor clusters. Tumor cells sit in Gaussian clusters,
/// lymphocytes in a wider halo around a random subset of those clusters, and
/// stromal cells are spread uniformly.
inline Dataset synth_dataset(const SynthOptions& opt) {
  if (opt.patches == 0 || opt.size <= 0 || opt.min_cells > opt.max_cells)
    throw ArgumentError("synth: need patches >= 1, size >= 1 and min_cells <= max_cells");
  Dataset ds{{"tumor", "lymph", "stromal"}, {}};
  const double size = opt.size;
  for (std::size_t p = 0; p < opt.patches; ++p) {
    Rng rng = make_rng(derive_seed(opt.seed, {static_cast<std::uint64_t>(p)}));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const std::size_t total = std::uniform_int_distribution<std::size_t>(opt.min_cells, opt.max_cells)(rng);
    PointPattern pat{"synth-" + std::to_string(p), opt.size, opt.size, {}};

    auto push_inside = [&](double x, double y, std::size_t type) {
      x = std::clamp(x, 0.0, std::nextafter(size, 0.0));
      y = std::clamp(y, 0.0, std::nextafter(size, 0.0));
      pat.cells.push_back({x, y, CellTypeId{type}});
    };

    const std::size_t n_tumor = total / 2;
    const std::size_t n_lymph = (total * 3) / 10;
    const std::size_t n_stromal = total - n_tumor - n_lymph;
    if (!opt.clustered) {
      for (std::size_t type = 0; type < 3; ++type) {
        const std::size_t n = type == 0 ? n_tumor : type == 1 ? n_lymph : n_stromal;
        for (std::size_t i = 0; i < n; ++i) push_inside(unit(rng) * size, unit(rng) * size, type);
      }
      ds.patches.push_back(std::move(pat));
      continue;
    }

    const double density = static_cast<double>(total - opt.min_cells) /
                           std::max<double>(1.0, static_cast<double>(opt.max_cells - opt.min_cells));
    const std::size_t clusters = 1 + static_cast<std::size_t>(std::lround(3.0 * density));
    const double spread = (0.09 - 0.04 * density) * size;
    std::vector<std::pair<double, double>> centres;
    for (std::size_t k = 0; k < clusters; ++k)
      centres.emplace_back((0.2 + 0.6 * unit(rng)) * size, (0.2 + 0.6 * unit(rng)) * size);

    std::normal_distribution<double> tight(0.0, spread);
    std::normal_distribution<double> halo(0.0, 2.0 * spread);
    std::uniform_int_distribution<std::size_t> pick(0, clusters - 1);
    for (std::size_t i = 0; i < n_tumor; ++i) {
      const auto& c = centres[pick(rng)];
      push_inside(c.first + tight(rng), c.second + tight(rng), 0);
    }
    for (std::size_t i = 0; i < n_lymph; ++i) {
      const auto& c = centres[pick(rng)];
      push_inside(c.first + halo(rng), c.second + halo(rng), 1);
    }
    for (std::size_t i = 0; i < n_stromal; ++i) push_inside(unit(rng) * size, unit(rng) * size, 2);
    ds.patches.push_back(std::move(pat));
  }
  return ds;
}

}  // namespace layoutforge
