#pragma once

// Gaussian mixture copula model over 2-D points.
//
// Marginals F_j are 1-D Gaussian mixtures; dependence is carried by a 2-D
// Gaussian mixture g over latent coordinates z_j = G_j^{-1}(F_j(x_j)), where G_j
// is the j-th marginal CDF of g. The joint density is
//
//   f(x) = g(z) / (g_1(z_1) g_2(z_2)) * f_1(x_1) f_2(x_2).

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "layoutforge/errors.hpp"
#include "layoutforge/gaussian_mixture.hpp"

namespace layoutforge {

/// Affine re-parametrization of `g` so each latent axis has zero mean and unit
/// variance. The copula it defines is unchanged.
inline GaussianMixture<2> standardize_copula(const GaussianMixture<2>& g) {
  const Point<2> mean = g.mean();
  const PointMatrix<2> cov = g.covariance();
  const Eigen::Vector2d scale(1.0 / std::sqrt(cov(0, 0)), 1.0 / std::sqrt(cov(1, 1)));
  const Eigen::Matrix2d d = scale.asDiagonal();
  std::vector<GaussianMixture<2>::Component> comps;
  for (const auto& c : g.components()) comps.push_back({c.weight, d * (c.mean - mean), d * c.covariance * d});
  return GaussianMixture<2>(std::move(comps));
}

class GmcmModel {
public:
  GmcmModel(std::array<GaussianMixture<1>, 2> marginals, GaussianMixture<2> copula)
      : marginals_(std::move(marginals)), copula_(std::move(copula)),
        latent_marginals_{copula_.marginal(0), copula_.marginal(1)} {}

  const std::array<GaussianMixture<1>, 2>& marginals() const noexcept { return marginals_; }
  const GaussianMixture<2>& copula() const noexcept { return copula_; }
  const GaussianMixture<1>& latent_marginal(int axis) const { return latent_marginals_.at(axis); }

  /// z_j = G_j^{-1}(F_j(x_j)).
  Point<2> latent(const Point<2>& x) const {
    Point<2> z;
    for (int j = 0; j < 2; ++j) z(j) = mixture_quantile(latent_marginals_[j], mixture_tails(marginals_[j], x(j)));
    return z;
  }

  /// log c(u) = log g(z) - sum_j log g_j(z_j).
  double copula_log_density_latent(const Point<2>& z) const {
    return copula_.log_density(z) - latent_marginals_[0].log_density(z.segment<1>(0)) -
           latent_marginals_[1].log_density(z.segment<1>(1));
  }

  double log_density(const Point<2>& x) const {
    const double lf = marginals_[0].log_density(x.segment<1>(0)) + marginals_[1].log_density(x.segment<1>(1));
    if (!std::isfinite(lf)) return -std::numeric_limits<double>::infinity();
    return copula_log_density_latent(latent(x)) + lf;
  }

  double density(const Point<2>& x) const { return std::exp(log_density(x)); }

  /// Marginal parameters plus copula parameters, less the four fixed by standardization.
  std::size_t free_parameters() const noexcept {
    return marginals_[0].free_parameters() + marginals_[1].free_parameters() + copula_.free_parameters() - 4;
  }

  template <class Gen>
  Point<2> sample(Gen& rng) const {
    const Point<2> z = copula_.sample(rng);
    Point<2> x;
    for (int j = 0; j < 2; ++j) x(j) = mixture_quantile(marginals_[j], mixture_tails(latent_marginals_[j], z(j)));
    return x;
  }

private:
  std::array<GaussianMixture<1>, 2> marginals_;
  GaussianMixture<2> copula_;
  std::array<GaussianMixture<1>, 2> latent_marginals_;
};

struct GmcmOptions {
  EmOptions em;
  int max_rounds = 100;
  /// Outer loop stops once the copula log-likelihood gain is below tolerance * max(1, |log L|).
  double tolerance = 1e-5;
  /// EM iterations on the latent points between two recomputations of z.
  int em_steps_per_round = 10;
};

struct GmcmFit {
  GmcmModel model;
  /// Copula part of the log-likelihood, sum_i log c(u_i).
  double copula_log_likelihood = 0.0;
  /// Full log-likelihood, copula plus marginals.
  double log_likelihood = 0.0;
  std::vector<double> copula_trace;
  int rounds = 0;
};

namespace detail {

inline std::array<PointList<1>, 2> split_axes(std::span<const Point<2>> pts) {
  std::array<PointList<1>, 2> axes;
  for (const auto& p : pts)
    for (int j = 0; j < 2; ++j) axes[j].push_back(Point<1>::Constant(p(j)));
  return axes;
}

}  // namespace detail

/// Fits the copula mixture given already-fitted marginals. Alternates between
/// recomputing latent points under the current copula marginals and running
/// EM steps on them; keeps the round with the best copula likelihood.
inline GmcmFit fit_gmcm_copula(std::span<const Point<2>> pts, const std::array<GaussianMixture<1>, 2>& marginals,
                               std::size_t m_copula, std::uint64_t seed, const GmcmOptions& options = {}) {
  const std::size_t n = pts.size();
  if (m_copula == 0 || m_copula > n) throw ArgumentError("fit_gmcm: invalid copula component count");

  std::vector<std::array<TailPair, 2>> u(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) u[i][j] = mixture_tails(marginals[j], pts[i](j));

  double marginal_ll = 0.0;
  for (const auto& p : pts)
    marginal_ll += marginals[0].log_density(p.segment<1>(0)) + marginals[1].log_density(p.segment<1>(1));

  const auto standard_normal = GaussianMixture<1>::standard();
  PointList<2> z(n);
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j < 2; ++j) z[i](j) = mixture_quantile(standard_normal, u[i][j]);

  EmOptions init = options.em;
  init.max_iterations = options.em_steps_per_round;
  GmcmModel current(marginals, standardize_copula(fit_gmm<2>(z, m_copula, seed, init).model));

  EmOptions step = options.em;
  step.max_iterations = options.em_steps_per_round;
  step.restarts = 1;

  std::optional<GmcmModel> best;
  double best_ll = -std::numeric_limits<double>::infinity();
  double prev_ll = -std::numeric_limits<double>::infinity();
  std::vector<double> trace;
  int rounds = 0;
  for (int round = 0; round < options.max_rounds; ++round) {
    rounds = round + 1;
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (int j = 0; j < 2; ++j) z[i](j) = mixture_quantile(current.latent_marginal(j), u[i][j]);
      ll += current.copula_log_density_latent(z[i]);
    }
    if (!std::isfinite(ll)) throw FitError("fit_gmcm: copula log-likelihood is not finite");
    trace.push_back(ll);
    if (ll > best_ll) best_ll = ll, best = current;
    if (ll - prev_ll < options.tolerance * std::max(1.0, std::abs(ll))) break;
    prev_ll = ll;
    auto refit = em_refine<2>(z, current.copula(), step);
    current = GmcmModel(marginals, standardize_copula(refit.model));
  }
  return {std::move(*best), best_ll, best_ll + marginal_ll, std::move(trace), rounds};
}

/// Two-stage fit: per-axis 1-D mixtures with `m_marginal` components, then the copula mixture.
inline GmcmFit fit_gmcm(std::span<const Point<2>> pts, std::size_t m_marginal, std::size_t m_copula, std::uint64_t seed,
                        const GmcmOptions& options = {}) {
  if (pts.size() < std::max(m_marginal, m_copula) || m_marginal == 0)
    throw ArgumentError("fit_gmcm: not enough points for the requested component counts");
  const auto axes = detail::split_axes(pts);
  std::array<GaussianMixture<1>, 2> marginals{
      fit_gmm<1>(axes[0], m_marginal, derive_seed(seed, {0}), options.em).model,
      fit_gmm<1>(axes[1], m_marginal, derive_seed(seed, {1}), options.em).model};
  return fit_gmcm_copula(pts, marginals, m_copula, derive_seed(seed, {2}), options);
}

struct GmcmSelection {
  std::array<std::size_t, 2> marginal_components{};
  std::size_t copula_components = 0;
  GmcmFit fit;
};

/// Marginal orders are chosen per axis by 1-D BIC, independently; the copula
/// order is then chosen by BIC on the full likelihood.
inline GmcmSelection select_gmcm_bic(std::span<const Point<2>> pts, const std::vector<std::size_t>& marginal_candidates,
                                     const std::vector<std::size_t>& copula_candidates, std::uint64_t seed,
                                     const GmcmOptions& options = {}) {
  if (copula_candidates.empty()) throw ArgumentError("select_gmcm_bic: copula candidate list is empty");
  const auto axes = detail::split_axes(pts);
  auto sel0 = select_components_bic<1>(axes[0], marginal_candidates, derive_seed(seed, {0}), options.em);
  auto sel1 = select_components_bic<1>(axes[1], marginal_candidates, derive_seed(seed, {1}), options.em);
  const std::array<GaussianMixture<1>, 2> marginals{sel0.fit.model, sel1.fit.model};

  std::optional<GmcmSelection> best;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t m : copula_candidates) {
    auto fit = fit_gmcm_copula(pts, marginals, m, derive_seed(seed, {2}), options);
    const double score = bic_score(fit.model.free_parameters(), fit.log_likelihood, pts.size());
    if (score < best_score) {
      best_score = score;
      best = GmcmSelection{{sel0.components, sel1.components}, m, std::move(fit)};
    }
  }
  return std::move(*best);
}

}  // namespace layoutforge
