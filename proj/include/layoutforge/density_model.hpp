#pragma once

// Per-cell-type spatial density models (KDE, GMM, GMCM), their fitting policy,
// density-map rasterization and JSON model files.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "layoutforge/errors.hpp"
#include "layoutforge/gaussian_mixture.hpp"
#include "layoutforge/gmcm.hpp"
#include "layoutforge/kde.hpp"
#include "layoutforge/layout.hpp"
#include "layoutforge/random.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

enum class DensityKind { none, kde, gmm, gmcm };

inline std::string to_string(DensityKind k) {
  switch (k) {
    case DensityKind::none: return "none";
    case DensityKind::kde: return "kde";
    case DensityKind::gmm: return "gmm";
    case DensityKind::gmcm: return "gmcm";
  }
  return "none";
}

inline DensityKind parse_density_kind(const std::string& s) {
  if (s == "none") return DensityKind::none;
  if (s == "kde") return DensityKind::kde;
  if (s == "gmm") return DensityKind::gmm;
  if (s == "gmcm") return DensityKind::gmcm;
  throw ArgumentError("unknown density kind '" + s + "' (expected none, kde, gmm or gmcm)");
}

/// A fitted density for one cell type of one patch, in unit-square coordinates.
/// An empty model (no cells of the type) has point_count 0 and evaluates to 0.
struct DensityModel {
  CellTypeId cell_type;
  std::size_t point_count = 0;
  std::variant<std::monostate, KdeModel, GmmModel, GmcmModel> model;

  DensityKind kind() const {
    switch (model.index()) {
      case 1: return DensityKind::kde;
      case 2: return DensityKind::gmm;
      case 3: return DensityKind::gmcm;
      default: return DensityKind::none;
    }
  }
  bool empty() const noexcept { return std::holds_alternative<std::monostate>(model); }
};

inline double evaluate_log_density(const DensityModel& m, const Point<2>& x) {
  return std::visit(
      [&](const auto& model) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(model)>, std::monostate>)
          return -std::numeric_limits<double>::infinity();
        else
          return model.log_density(x);
      },
      m.model);
}

inline double evaluate_density(const DensityModel& m, const Point<2>& x) { return std::exp(evaluate_log_density(m, x)); }

inline PointList<2> sample_density(const DensityModel& m, std::size_t n, std::uint64_t seed) {
  PointList<2> out;
  if (m.empty() || n == 0) return out;
  Rng rng = make_rng(seed);
  out.reserve(n);
  std::visit(
      [&](const auto& model) {
        if constexpr (!std::is_same_v<std::decay_t<decltype(model)>, std::monostate>)
          for (std::size_t i = 0; i < n; ++i) out.push_back(model.sample(rng));
      },
      m.model);
  return out;
}

/// Density evaluated at grid-cell centers, scaled so the channel maximum is 1.
/// Empty models give an all-zero channel.
inline Tensor rasterize_density(const DensityModel& m, GridSize grid) {
  Tensor out({1, grid.height, grid.width});
  if (m.empty() || m.point_count == 0) return out;
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.height; ++i) {
    for (std::size_t j = 0; j < grid.width; ++j) {
      const Point<2> x((static_cast<double>(j) + 0.5) / static_cast<double>(grid.width),
                       (static_cast<double>(i) + 0.5) / static_cast<double>(grid.height));
      const double v = evaluate_log_density(m, x);
      out.at(0, i, j) = v;
      peak = std::max(peak, v);
    }
  }
  if (!std::isfinite(peak)) return Tensor({1, grid.height, grid.width});
  for (double& v : out.values()) v = std::exp(v - peak);
  return out;
}

/// Cells of one type, normalized to the unit square by the patch extent.
inline PointList<2> normalized_points(const PointPattern& pattern, CellTypeId type) {
  PointList<2> out;
  for (const auto& c : pattern.cells)
    if (c.type == type) out.emplace_back(c.x / pattern.width, c.y / pattern.height);
  return out;
}

struct DensityFitOptions {
  DensityKind kind = DensityKind::gmm;
  /// Fixed KDE bandwidth; Scott's rule when unset.
  std::optional<double> bandwidth;
  /// Fixed GMM component count (capped at the point count); BIC over 1..max_components when unset.
  std::optional<std::size_t> gmm_components;
  std::size_t max_components = 8;
  /// BIC candidates are limited to m <= n / min_points_per_component.
  std::size_t min_points_per_component = 4;
  std::size_t max_copula_components = 3;
  EmOptions em;
  GmcmOptions gmcm;
};

inline std::vector<std::size_t> bic_candidates(std::size_t n, std::size_t max_m, std::size_t per_component) {
  const std::size_t cap = std::max<std::size_t>(1, std::min(max_m, n / std::max<std::size_t>(1, per_component)));
  std::vector<std::size_t> out;
  for (std::size_t m = 1; m <= cap; ++m) out.push_back(m);
  return out;
}

/// Fits `options.kind` to unit-square points. Fewer than two points fall back
/// to a single isotropic Gaussian at the lone point (width from Scott's rule
/// with the fallback spread); zero points give an empty model.
inline DensityModel fit_density(std::span<const Point<2>> pts, CellTypeId type, const DensityFitOptions& options,
                                std::uint64_t seed) {
  DensityModel out{type, pts.size(), std::monostate{}};
  if (pts.empty() || options.kind == DensityKind::none) return out;
  const std::size_t n = pts.size();

  if (options.kind == DensityKind::kde) {
    out.model = fit_kde(pts, options.bandwidth);
    return out;
  }

  if (n < 2) {
    const double h = scott_bandwidth(pts);
    const Point<2> p = pts.front();
    if (options.kind == DensityKind::gmm) {
      out.model = GmmModel({{1.0, p, h * h * PointMatrix<2>::Identity()}});
    } else {
      std::array<GaussianMixture<1>, 2> marginals{
          GaussianMixture<1>({{1.0, p.segment<1>(0), PointMatrix<1>::Constant(h * h)}}),
          GaussianMixture<1>({{1.0, p.segment<1>(1), PointMatrix<1>::Constant(h * h)}})};
      out.model = GmcmModel(marginals, GaussianMixture<2>::standard());
    }
    return out;
  }

  const auto candidates = bic_candidates(n, options.max_components, options.min_points_per_component);
  if (options.kind == DensityKind::gmm) {
    if (options.gmm_components)
      out.model = fit_gmm<2>(pts, std::min(*options.gmm_components, n), seed, options.em).model;
    else
      out.model = select_components_bic<2>(pts, candidates, seed, options.em).fit.model;
    return out;
  }

  std::vector<std::size_t> copula_candidates;
  for (std::size_t m : candidates)
    if (m <= options.max_copula_components) copula_candidates.push_back(m);
  GmcmOptions gmcm = options.gmcm;
  gmcm.em = options.em;
  out.model = select_gmcm_bic(pts, candidates, copula_candidates, seed, gmcm).fit.model;
  return out;
}

// --- model files -----------------------------------------------------------

namespace detail {

template <int Dim>
nlohmann::json mixture_to_json(const GaussianMixture<Dim>& g) {
  nlohmann::json comps = nlohmann::json::array();
  for (const auto& c : g.components()) {
    nlohmann::json mean = nlohmann::json::array(), cov = nlohmann::json::array();
    for (int a = 0; a < Dim; ++a) {
      mean.push_back(c.mean(a));
      nlohmann::json row = nlohmann::json::array();
      for (int b = 0; b < Dim; ++b) row.push_back(c.covariance(a, b));
      cov.push_back(std::move(row));
    }
    comps.push_back({{"weight", c.weight}, {"mean", std::move(mean)}, {"covariance", std::move(cov)}});
  }
  return comps;
}

template <int Dim>
GaussianMixture<Dim> mixture_from_json(const nlohmann::json& j) {
  std::vector<typename GaussianMixture<Dim>::Component> comps;
  for (const auto& c : j) {
    typename GaussianMixture<Dim>::Component comp;
    comp.weight = c.at("weight").get<double>();
    if (c.at("mean").size() != Dim || c.at("covariance").size() != Dim)
      throw ParseError("mixture component has the wrong dimension");
    for (int a = 0; a < Dim; ++a) {
      comp.mean(a) = c.at("mean").at(a).get<double>();
      for (int b = 0; b < Dim; ++b) comp.covariance(a, b) = c.at("covariance").at(a).at(b).get<double>();
    }
    comps.push_back(comp);
  }
  return GaussianMixture<Dim>(std::move(comps));
}

}  // namespace detail

inline nlohmann::json density_to_json(const DensityModel& m) {
  nlohmann::json j{{"kind", to_string(m.kind())}, {"cell_type", m.cell_type.index}, {"point_count", m.point_count}};
  if (const auto* kde = std::get_if<KdeModel>(&m.model)) {
    j["bandwidth"] = kde->bandwidth();
    nlohmann::json support = nlohmann::json::array();
    for (const auto& p : kde->support()) support.push_back({p(0), p(1)});
    j["support"] = std::move(support);
  } else if (const auto* gmm = std::get_if<GmmModel>(&m.model)) {
    j["components"] = detail::mixture_to_json(*gmm);
  } else if (const auto* gmcm = std::get_if<GmcmModel>(&m.model)) {
    j["marginals"] = {detail::mixture_to_json(gmcm->marginals()[0]), detail::mixture_to_json(gmcm->marginals()[1])};
    j["copula"] = detail::mixture_to_json(gmcm->copula());
  }
  return j;
}

inline DensityModel density_from_json(const nlohmann::json& j) {
  try {
    DensityModel m{CellTypeId{j.at("cell_type").get<std::size_t>()}, j.at("point_count").get<std::size_t>(),
                   std::monostate{}};
    const auto kind = parse_density_kind(j.at("kind").get<std::string>());
    if (kind == DensityKind::kde) {
      PointList<2> support;
      for (const auto& p : j.at("support")) support.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
      m.model = KdeModel(std::move(support), j.at("bandwidth").get<double>());
    } else if (kind == DensityKind::gmm) {
      m.model = detail::mixture_from_json<2>(j.at("components"));
    } else if (kind == DensityKind::gmcm) {
      m.model = GmcmModel({detail::mixture_from_json<1>(j.at("marginals").at(0)),
                           detail::mixture_from_json<1>(j.at("marginals").at(1))},
                          detail::mixture_from_json<2>(j.at("copula")));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("density model file does not match schema: ") + e.what());
  }
}

}  // namespace layoutforge
