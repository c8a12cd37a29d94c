#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "layoutforge/gmcm.hpp"
#include "layoutforge/random.hpp"

using namespace layoutforge;

namespace {

PointList<2> independent_points(std::size_t n, std::uint64_t seed) {
  // x: bimodal, y: unimodal; axes drawn independently.
  Rng rng = make_rng(seed);
  std::normal_distribution<double> a(0.3, 0.05), b(0.7, 0.08), c(0.5, 0.12);
  std::bernoulli_distribution coin(0.4);
  PointList<2> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(coin(rng) ? a(rng) : b(rng), c(rng));
  return pts;
}

PointList<2> correlated_points(std::size_t n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> z;
  PointList<2> pts;
  for (std::size_t i = 0; i < n; ++i) {
    const double u = z(rng), v = z(rng);
    pts.emplace_back(0.5 + 0.1 * u, 0.5 + 0.1 * (0.8 * u + 0.6 * v));
  }
  return pts;
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return v[static_cast<std::size_t>(p * (v.size() - 1))];
}

}  // namespace

TEST(Gmcm, IdentityCopulaIsProductOfMarginals) {
  const GaussianMixture<1> fx({{0.5, Point<1>::Constant(0.2), PointMatrix<1>::Constant(0.01)},
                               {0.5, Point<1>::Constant(0.6), PointMatrix<1>::Constant(0.02)}});
  const GaussianMixture<1> fy({{1.0, Point<1>::Constant(0.5), PointMatrix<1>::Constant(0.04)}});
  const GmcmModel model({fx, fy}, GaussianMixture<2>::standard());
  for (double x : {0.1, 0.3, 0.55, 0.9})
    for (double y : {0.0, 0.4, 0.8}) {
      const double expect = fx.density(Point<1>::Constant(x)) * fy.density(Point<1>::Constant(y));
      EXPECT_NEAR(model.density({x, y}), expect, 1e-9 * expect) << x << "," << y;
    }
}

TEST(Gmcm, StandardizedCopulaHasUnitMarginalMoments) {
  PointMatrix<2> s;
  s << 2.0, 0.7, 0.7, 0.5;
  const GaussianMixture<2> g({{0.3, {1.0, -2.0}, s}, {0.7, {0.0, 3.0}, PointMatrix<2>::Identity()}});
  const auto z = standardize_copula(g);
  EXPECT_LT(z.mean().norm(), 1e-12);
  EXPECT_NEAR(z.covariance()(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(z.covariance()(1, 1), 1.0, 1e-12);
}

TEST(Gmcm, IndependentDataCollapsesToProductOfMarginals) {
  const auto pts = independent_points(1500, 3);
  const auto fit = fit_gmcm(pts, 2, 2, 7);
  std::vector<double> xs, ys;
  for (const auto& p : pts) xs.push_back(p(0)), ys.push_back(p(1));
  const double x0 = quantile(xs, 0.25), x1 = quantile(xs, 0.75), y0 = quantile(ys, 0.25), y1 = quantile(ys, 0.75);
  const auto& m = fit.model.marginals();
  double worst = 0.0;
  for (int i = 0; i <= 10; ++i)
    for (int j = 0; j <= 10; ++j) {
      const Point<2> x(x0 + (x1 - x0) * i / 10.0, y0 + (y1 - y0) * j / 10.0);
      const double prod = m[0].density(x.segment<1>(0)) * m[1].density(x.segment<1>(1));
      worst = std::max(worst, std::abs(fit.model.density(x) / prod - 1.0));
    }
  EXPECT_LT(worst, 0.05);
}

TEST(Gmcm, MarginalConsistencyByQuadrature) {
  const auto pts = correlated_points(800, 5);
  const auto fit = fit_gmcm(pts, 2, 2, 1);
  const auto& fx = fit.model.marginals()[0];
  const double lo = -0.5, hi = 1.5;
  const int n = 4000;
  const double step = (hi - lo) / n;
  for (double x : {0.4, 0.45, 0.5, 0.55, 0.6}) {
    double integral = 0.0;
    for (int k = 0; k < n; ++k) integral += fit.model.density({x, lo + (k + 0.5) * step});
    integral *= step;
    EXPECT_NEAR(integral / fx.density(Point<1>::Constant(x)), 1.0, 0.02) << x;
  }
}

TEST(Gmcm, CapturesDependence) {
  const auto pts = correlated_points(800, 6);
  const auto fit = fit_gmcm(pts, 1, 1, 2);
  const auto cov = fit.model.copula().covariance();
  EXPECT_NEAR(cov(0, 1), 0.8, 0.08);
  // Copula likelihood beats independence (log c = 0).
  EXPECT_GT(fit.copula_log_likelihood, 100.0);
}

TEST(Gmcm, CopulaTraceIsRecordedAndBestRoundKept) {
  const auto pts = correlated_points(300, 8);
  const auto fit = fit_gmcm(pts, 2, 2, 4);
  ASSERT_FALSE(fit.copula_trace.empty());
  EXPECT_EQ(fit.copula_log_likelihood, *std::max_element(fit.copula_trace.begin(), fit.copula_trace.end()));
  EXPECT_LE(fit.rounds, 100);
}

TEST(Gmcm, FreeParameters) {
  const auto pts = correlated_points(200, 9);
  const auto fit = fit_gmcm(pts, 2, 2, 0);
  // Two 1-D two-component marginals (5 each), a 2-D two-component copula (11), less 4.
  EXPECT_EQ(fit.model.free_parameters(), 5u + 5u + 11u - 4u);
}

TEST(Gmcm, SamplingRecoversMarginalMeans) {
  const GaussianMixture<1> fx({{0.5, Point<1>::Constant(0.25), PointMatrix<1>::Constant(0.003)},
                               {0.5, Point<1>::Constant(0.75), PointMatrix<1>::Constant(0.003)}});
  const GaussianMixture<1> fy({{1.0, Point<1>::Constant(0.4), PointMatrix<1>::Constant(0.01)}});
  PointMatrix<2> r;
  r << 1.0, 0.6, 0.6, 1.0;
  const GmcmModel model({fx, fy}, GaussianMixture<2>({{1.0, {0.0, 0.0}, r}}));
  Rng rng = make_rng(12);
  PointList<2> s;
  for (int i = 0; i < 4000; ++i) s.push_back(model.sample(rng));
  std::array<PointList<1>, 2> axes;
  for (const auto& p : s) axes[0].push_back(Point<1>::Constant(p(0))), axes[1].push_back(Point<1>::Constant(p(1)));
  const auto gx = fit_gmm<1>(axes[0], 2, 3).model;
  const auto gy = fit_gmm<1>(axes[1], 1, 3).model;
  std::vector<double> mx{gx.component(0).mean(0), gx.component(1).mean(0)};
  std::sort(mx.begin(), mx.end());
  EXPECT_NEAR(mx[0], 0.25, 0.1);
  EXPECT_NEAR(mx[1], 0.75, 0.1);
  EXPECT_NEAR(gy.component(0).mean(0), 0.4, 0.1);
}

TEST(Gmcm, BicSelectionIsPerAxis) {
  const auto pts = independent_points(600, 10);
  const auto sel = select_gmcm_bic(pts, {1, 2, 3}, {1, 2}, 0);
  EXPECT_EQ(sel.marginal_components[0], 2u);
  EXPECT_EQ(sel.marginal_components[1], 1u);
  EXPECT_THROW(select_gmcm_bic(pts, {1}, {}, 0), ArgumentError);
}

TEST(Gmcm, QuantileRejectsNonFiniteTargets) {
  EXPECT_THROW(mixture_quantile(GaussianMixture<1>::standard(), TailPair{std::nan(""), 0.5}), FitError);
}
