#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "layoutforge/density_model.hpp"
#include "layoutforge/random.hpp"

using namespace layoutforge;

namespace {

PointList<2> cluster(std::size_t n, double cx, double cy, double s, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::normal_distribution<double> nx(cx, s), ny(cy, s);
  PointList<2> pts;
  for (std::size_t i = 0; i < n; ++i) pts.emplace_back(nx(rng), ny(rng));
  return pts;
}

DensityModel gmm_model(GmmModel g, std::size_t n = 10) { return {CellTypeId{0}, n, std::move(g)}; }

double riemann_mass(const DensityModel& m, double lo, double hi, int n) {
  const double step = (hi - lo) / n;
  double s = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) s += evaluate_density(m, {lo + (i + 0.5) * step, lo + (j + 0.5) * step});
  return s * step * step;
}

}  // namespace

TEST(DensityKindNames, RoundTrip) {
  for (auto k : {DensityKind::none, DensityKind::kde, DensityKind::gmm, DensityKind::gmcm})
    EXPECT_EQ(parse_density_kind(to_string(k)), k);
  EXPECT_THROW(parse_density_kind("gmmm"), ArgumentError);
}

TEST(Evaluate, GmmStandardPeak) {
  const auto m = gmm_model(GmmModel({{1.0, {0.0, 0.0}, PointMatrix<2>::Identity()}}));
  EXPECT_NEAR(evaluate_density(m, {0.0, 0.0}), 0.15915494309189535, 1e-12);
}

TEST(Evaluate, EmptyModelIsZero) {
  const DensityModel m{CellTypeId{1}, 0, std::monostate{}};
  EXPECT_EQ(evaluate_density(m, {0.5, 0.5}), 0.0);
  EXPECT_TRUE(sample_density(m, 5, 0).empty());
}

// Every model kind integrates to 1 on a 512x512 grid over a box holding its mass.
TEST(Evaluate, NormalizationForAllKinds) {
  auto pts = cluster(60, 0.4, 0.6, 0.08, 1);
  const auto more = cluster(40, 0.7, 0.3, 0.05, 2);
  pts.insert(pts.end(), more.begin(), more.end());
  for (auto kind : {DensityKind::kde, DensityKind::gmm, DensityKind::gmcm}) {
    DensityFitOptions opt;
    opt.kind = kind;
    const auto m = fit_density(pts, CellTypeId{0}, opt, 3);
    EXPECT_NEAR(riemann_mass(m, -0.5, 1.5, 512), 1.0, 0.01) << to_string(kind);
  }
}

TEST(Sample, ZeroAndMeanOfStandardGmm) {
  const auto m = gmm_model(GmmModel({{1.0, {0.0, 0.0}, PointMatrix<2>::Identity()}}));
  EXPECT_TRUE(sample_density(m, 0, 1).empty());
  const auto s = sample_density(m, 10000, 2);
  Point<2> mean = Point<2>::Zero();
  for (const auto& p : s) mean += p;
  mean /= 10000.0;
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_EQ(s, sample_density(m, 10000, 2));
}

// Chi-square goodness of fit between a histogram of samples and the density
// integrated over each bin; bins with low expectation are pooled.
TEST(Sample, HistogramAgreesWithDensity) {
  auto pts = cluster(50, 0.35, 0.5, 0.1, 4);
  const auto more = cluster(30, 0.7, 0.7, 0.06, 5);
  pts.insert(pts.end(), more.begin(), more.end());
  for (auto kind : {DensityKind::kde, DensityKind::gmm, DensityKind::gmcm}) {
    DensityFitOptions opt;
    opt.kind = kind;
    const auto m = fit_density(pts, CellTypeId{0}, opt, 6);
    const int bins = 10, sub = 8, n = 100000;
    const double lo = -0.2, hi = 1.2, w = (hi - lo) / bins;
    std::vector<double> expected(bins * bins, 0.0), observed(bins * bins, 0.0);
    for (int i = 0; i < bins; ++i)
      for (int j = 0; j < bins; ++j)
        for (int a = 0; a < sub; ++a)
          for (int b = 0; b < sub; ++b)
            expected[i * bins + j] += evaluate_density(m, {lo + (i + (a + 0.5) / sub) * w, lo + (j + (b + 0.5) / sub) * w}) *
                                      (w / sub) * (w / sub) * n;
    double outside = 0.0;
    for (const auto& p : sample_density(m, n, 7)) {
      const int i = static_cast<int>(std::floor((p(0) - lo) / w)), j = static_cast<int>(std::floor((p(1) - lo) / w));
      if (i < 0 || j < 0 || i >= bins || j >= bins) outside += 1.0;
      else observed[i * bins + j] += 1.0;
    }
    double chi2 = 0.0, pool_e = 0.0, pool_o = outside;
    int dof = 0;
    double inside_e = 0.0;
    for (double e : expected) inside_e += e;
    pool_e += n - inside_e;
    for (std::size_t k = 0; k < expected.size(); ++k) {
      if (expected[k] < 20.0) {
        pool_e += expected[k];
        pool_o += observed[k];
        continue;
      }
      chi2 += (observed[k] - expected[k]) * (observed[k] - expected[k]) / expected[k];
      ++dof;
    }
    if (pool_e > 5.0) chi2 += (pool_o - pool_e) * (pool_o - pool_e) / pool_e, ++dof;
    // Upper 1% point of chi-square: Wilson-Hilferty approximation.
    const double k = dof - 1, z = 2.3263478740408408;
    const double crit = k * std::pow(1.0 - 2.0 / (9.0 * k) + z * std::sqrt(2.0 / (9.0 * k)), 3);
    EXPECT_LT(chi2, crit) << to_string(kind) << " dof " << dof;
  }
}

TEST(RasterizeDensity, UnimodalPeakAtCenter) {
  const auto m = gmm_model(GmmModel({{1.0, {0.5, 0.5}, 0.01 * PointMatrix<2>::Identity()}}));
  const auto t = rasterize_density(m, {63, 63});
  EXPECT_EQ(t.at(0, 31, 31), 1.0);
  std::size_t maxima = 0;
  for (double v : t.values()) {
    EXPECT_GE(v, 0.0);
    if (v == 1.0) ++maxima;
  }
  EXPECT_EQ(maxima, 1u);
}

TEST(RasterizeDensity, AbsentTypeIsZero) {
  const DensityModel m{CellTypeId{2}, 0, std::monostate{}};
  const auto t = rasterize_density(m, {16, 16});
  for (double v : t.values()) EXPECT_EQ(v, 0.0);
}

TEST(RasterizeDensity, EqualPeaksForSymmetricPair) {
  const PointMatrix<2> s = 0.002 * PointMatrix<2>::Identity();
  const auto m = gmm_model(GmmModel({{0.5, {0.25 + 1.0 / 128, 0.5 + 1.0 / 128}, s}, {0.5, {0.75 + 1.0 / 128, 0.5 + 1.0 / 128}, s}}));
  const auto t = rasterize_density(m, {64, 64});
  EXPECT_NEAR(t.at(0, 32, 16), 1.0, 1e-9);
  EXPECT_NEAR(t.at(0, 32, 48), 1.0, 1e-9);
}

TEST(RasterizeDensity, MaxIsExactlyOneForFittedModels) {
  const auto pts = cluster(40, 0.3, 0.6, 0.1, 8);
  for (auto kind : {DensityKind::kde, DensityKind::gmm, DensityKind::gmcm}) {
    DensityFitOptions opt;
    opt.kind = kind;
    const auto t = rasterize_density(fit_density(pts, CellTypeId{0}, opt, 1), {32, 32});
    EXPECT_EQ(*std::max_element(t.values().begin(), t.values().end()), 1.0);
    EXPECT_GE(*std::min_element(t.values().begin(), t.values().end()), 0.0);
  }
}

TEST(FitDensity, LonePointFallback) {
  const PointList<2> one{{0.3, 0.7}};
  const double h = 1.0 / std::sqrt(12.0);
  for (auto kind : {DensityKind::kde, DensityKind::gmm, DensityKind::gmcm}) {
    DensityFitOptions opt;
    opt.kind = kind;
    const auto m = fit_density(one, CellTypeId{0}, opt, 0);
    EXPECT_EQ(m.point_count, 1u);
    EXPECT_NEAR(evaluate_density(m, {0.3, 0.7}), 1.0 / (2.0 * std::numbers::pi * h * h), 1e-9) << to_string(kind);
  }
  DensityFitOptions none;
  none.kind = DensityKind::none;
  EXPECT_TRUE(fit_density(one, CellTypeId{0}, none, 0).empty());
  DensityFitOptions gmm;
  EXPECT_TRUE(fit_density(PointList<2>{}, CellTypeId{0}, gmm, 0).empty());
}

TEST(FitDensity, BicCandidateCap) {
  EXPECT_EQ(bic_candidates(3, 8, 4), (std::vector<std::size_t>{1}));
  EXPECT_EQ(bic_candidates(13, 8, 4), (std::vector<std::size_t>{1, 2, 3}));
  EXPECT_EQ(bic_candidates(1000, 8, 4).size(), 8u);
}

TEST(FitDensity, FixedOptionsAreHonoured) {
  const auto pts = cluster(50, 0.5, 0.5, 0.1, 9);
  DensityFitOptions kde;
  kde.kind = DensityKind::kde;
  kde.bandwidth = 0.05;
  EXPECT_EQ(std::get<KdeModel>(fit_density(pts, CellTypeId{0}, kde, 0).model).bandwidth(), 0.05);
  DensityFitOptions gmm;
  gmm.gmm_components = 4;
  EXPECT_EQ(std::get<GmmModel>(fit_density(pts, CellTypeId{0}, gmm, 0).model).size(), 4u);
}

TEST(ModelFile, RoundTripIsBitExact) {
  auto pts = cluster(40, 0.3, 0.3, 0.07, 10);
  const auto more = cluster(40, 0.7, 0.6, 0.1, 11);
  pts.insert(pts.end(), more.begin(), more.end());
  for (auto kind : {DensityKind::kde, DensityKind::gmm, DensityKind::gmcm}) {
    DensityFitOptions opt;
    opt.kind = kind;
    const auto m = fit_density(pts, CellTypeId{1}, opt, 12);
    const std::string text = density_to_json(m).dump();
    const auto back = density_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(back.kind(), kind);
    EXPECT_EQ(back.cell_type, m.cell_type);
    EXPECT_EQ(back.point_count, m.point_count);
    EXPECT_EQ(density_to_json(back).dump(), text);
    for (const Point<2> x : {Point<2>(0.3, 0.3), Point<2>(0.55, 0.41), Point<2>(0.9, 0.1)})
      EXPECT_EQ(evaluate_log_density(back, x), evaluate_log_density(m, x));
  }
}

TEST(ModelFile, SchemaErrors) {
  EXPECT_THROW(density_from_json(nlohmann::json::parse(R"({"kind": "gmm", "cell_type": 0})")), ParseError);
  EXPECT_THROW(density_from_json(nlohmann::json::parse(R"({"kind": "xyz", "cell_type": 0, "point_count": 1})")),
               ArgumentError);
}
