#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>

#include "layoutforge/errors.hpp"
#include "layoutforge/gaussian_mixture.hpp"

namespace layoutforge {

/// Spread used when a sample has no usable standard deviation (a single point or
/// coincident points): the standard deviation of a uniform variable on [0, 1].
inline constexpr double kFallbackSpread = 0.28867513459481287;

/// Scott's rule factor n^(-1/(d+4)).
inline double scott_factor(std::size_t n, std::size_t d) {
  if (n == 0) throw ArgumentError("scott_factor: sample count must be >= 1");
  if (d == 0) throw ArgumentError("scott_factor: dimension must be >= 1");
  return std::pow(static_cast<double>(n), -1.0 / (static_cast<double>(d) + 4.0));
}

/// Mean of the per-axis sample standard deviations (n - 1 denominator).
inline double mean_axis_std(std::span<const Point<2>> pts) {
  if (pts.size() < 2) return 0.0;
  Point<2> mean = Point<2>::Zero();
  for (const auto& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Point<2> var = Point<2>::Zero();
  for (const auto& p : pts) var += (p - mean).cwiseAbs2();
  var /= static_cast<double>(pts.size() - 1);
  return 0.5 * (std::sqrt(var(0)) + std::sqrt(var(1)));
}

/// Isotropic Scott bandwidth: factor times the mean axis standard deviation.
inline double scott_bandwidth(std::span<const Point<2>> pts) {
  double spread = mean_axis_std(pts);
  if (!(spread > 0.0)) spread = kFallbackSpread;
  return scott_factor(pts.size(), 2) * spread;
}

/// Isotropic Gaussian KDE: density(x) = (1/n) sum_i N(x; p_i, h^2 I).
class KdeModel {
public:
  KdeModel(PointList<2> support, double bandwidth) : support_(std::move(support)), bandwidth_(bandwidth) {
    if (support_.empty()) throw ArgumentError("KDE needs at least one support point");
    if (!(bandwidth_ > 0.0) || !std::isfinite(bandwidth_)) throw ArgumentError("KDE bandwidth must be positive");
  }

  const PointList<2>& support() const noexcept { return support_; }
  double bandwidth() const noexcept { return bandwidth_; }

  double density(const Point<2>& x) const {
    const double inv2h2 = 1.0 / (2.0 * bandwidth_ * bandwidth_);
    double s = 0.0;
    for (const auto& p : support_) s += std::exp(-(x - p).squaredNorm() * inv2h2);
    return s / (static_cast<double>(support_.size()) * 2.0 * std::numbers::pi * bandwidth_ * bandwidth_);
  }

  /// Same as log(density(x)) but stays finite far from the support.
  double log_density(const Point<2>& x) const {
    const double inv2h2 = 1.0 / (2.0 * bandwidth_ * bandwidth_);
    double closest = std::numeric_limits<double>::infinity();
    for (const auto& p : support_) closest = std::min(closest, (x - p).squaredNorm());
    double s = 0.0;
    for (const auto& p : support_) s += std::exp(-((x - p).squaredNorm() - closest) * inv2h2);
    return std::log(s) - closest * inv2h2 -
           std::log(static_cast<double>(support_.size()) * 2.0 * std::numbers::pi * bandwidth_ * bandwidth_);
  }

  template <class Gen>
  Point<2> sample(Gen& rng) const {
    const auto k = std::uniform_int_distribution<std::size_t>(0, support_.size() - 1)(rng);
    std::normal_distribution<double> normal(0.0, bandwidth_);
    Point<2> out = support_[k];
    out(0) += normal(rng);
    out(1) += normal(rng);
    return out;
  }

private:
  PointList<2> support_;
  double bandwidth_;
};

/// Scott's rule is used when no bandwidth is given.
inline KdeModel fit_kde(std::span<const Point<2>> pts, std::optional<double> bandwidth = std::nullopt) {
  if (pts.empty()) throw ArgumentError("fit_kde: no points");
  const double h = bandwidth ? *bandwidth : scott_bandwidth(pts);
  return KdeModel(PointList<2>(pts.begin(), pts.end()), h);
}

}  // namespace layoutforge
