#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "layoutforge/errors.hpp"
#include "layoutforge/random.hpp"

namespace layoutforge {

template <int Dim>
using Point = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using PointMatrix = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
using PointList = std::vector<Point<Dim>>;

/// Finite mixture of full-covariance Gaussians in `Dim` dimensions.
template <int Dim>
class GaussianMixture {
public:
  using Vec = Point<Dim>;
  using Mat = PointMatrix<Dim>;

  struct Component {
    double weight = 1.0;
    Vec mean = Vec::Zero();
    Mat covariance = Mat::Identity();
  };

  GaussianMixture() = default;

  explicit GaussianMixture(std::vector<Component> components) : components_(std::move(components)) {
    if (components_.empty()) throw ArgumentError("a Gaussian mixture needs at least one component");
    double total = 0.0;
    for (const auto& c : components_) {
      if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ArgumentError("mixture weights must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw ArgumentError("mixture weights must sum to 1, got " + std::to_string(total));
    cache_.reserve(components_.size());
    for (const auto& c : components_) {
      Eigen::LLT<Mat> llt(c.covariance);
      if (llt.info() != Eigen::Success || !c.covariance.allFinite())
        throw ArgumentError("mixture covariance is not positive definite");
      const Mat l = llt.matrixL();
      double log_det = 0.0;
      for (int k = 0; k < Dim; ++k) log_det += 2.0 * std::log(l(k, k));
      cache_.push_back({l, std::log(c.weight) - 0.5 * (Dim * std::log(2.0 * std::numbers::pi) + log_det)});
    }
  }

  /// Single standard-normal component.
  static GaussianMixture standard() { return GaussianMixture(std::vector<Component>(1)); }

  std::size_t size() const noexcept { return components_.size(); }
  const std::vector<Component>& components() const noexcept { return components_; }
  const Component& component(std::size_t k) const { return components_.at(k); }

  /// log(w_k) + log N(x; mu_k, Sigma_k).
  double component_log_density(std::size_t k, const Vec& x) const {
    const Vec r = cache_[k].cholesky.template triangularView<Eigen::Lower>().solve(x - components_[k].mean);
    return cache_[k].log_norm - 0.5 * r.squaredNorm();
  }

  double log_density(const Vec& x) const {
    double best = -std::numeric_limits<double>::infinity();
    thread_local std::vector<double> terms;
    terms.resize(components_.size());
    for (std::size_t k = 0; k < components_.size(); ++k) best = std::max(best, terms[k] = component_log_density(k, x));
    if (!std::isfinite(best)) return best;
    double s = 0.0;
    for (double t : terms) s += std::exp(t - best);
    return best + std::log(s);
  }

  double density(const Vec& x) const { return std::exp(log_density(x)); }

  Vec mean() const {
    Vec m = Vec::Zero();
    for (const auto& c : components_) m += c.weight * c.mean;
    return m;
  }

  /// Total covariance of the mixture (law of total variance).
  Mat covariance() const {
    const Vec m = mean();
    Mat s = Mat::Zero();
    for (const auto& c : components_) s += c.weight * (c.covariance + (c.mean - m) * (c.mean - m).transpose());
    return s;
  }

  /// Number of free parameters: (m - 1) weights, m * Dim means, m * Dim(Dim+1)/2 covariances.
  std::size_t free_parameters() const noexcept {
    const std::size_t m = components_.size();
    return m - 1 + m * Dim + m * Dim * (Dim + 1) / 2;
  }

  /// Axis-`axis` marginal, itself a 1-D mixture.
  GaussianMixture<1> marginal(int axis) const {
    std::vector<typename GaussianMixture<1>::Component> out;
    for (const auto& c : components_) {
      typename GaussianMixture<1>::Component m;
      m.weight = c.weight;
      m.mean(0) = c.mean(axis);
      m.covariance(0, 0) = c.covariance(axis, axis);
      out.push_back(m);
    }
    return GaussianMixture<1>(std::move(out));
  }

  template <class Gen>
  Vec sample(Gen& rng) const {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    double u = unit(rng);
    std::size_t k = 0;
    for (; k + 1 < components_.size(); ++k) {
      u -= components_[k].weight;
      if (u < 0.0) break;
    }
    std::normal_distribution<double> normal;
    Vec z;
    for (int d = 0; d < Dim; ++d) z(d) = normal(rng);
    return components_[k].mean + cache_[k].cholesky * z;
  }

private:
  struct Cache {
    Mat cholesky;
    double log_norm;
  };
  std::vector<Component> components_;
  std::vector<Cache> cache_;
};

using GmmModel = GaussianMixture<2>;

template <int Dim>
double total_log_likelihood(const GaussianMixture<Dim>& model, std::span<const Point<Dim>> points) {
  double s = 0.0;
  for (const auto& p : points) s += model.log_density(p);
  return s;
}

/// BIC = p ln n - 2 ln L.
inline double bic_score(std::size_t free_parameters, double log_likelihood, std::size_t n) {
  return static_cast<double>(free_parameters) * std::log(static_cast<double>(n)) - 2.0 * log_likelihood;
}

struct EmOptions {
  int max_iterations = 500;
  /// Stop once the log-likelihood gain falls below tolerance * max(1, |log L|).
  double tolerance = 1e-6;
  /// Added to every covariance in each M-step.
  double covariance_floor = 1e-6;
  /// Independent k-means++ initializations; the best final likelihood wins.
  int restarts = 3;
  int kmeans_iterations = 10;
};

template <int Dim>
struct EmFit {
  GaussianMixture<Dim> model;
  double log_likelihood = 0.0;
  /// Log-likelihood after initialization and after each EM iteration.
  std::vector<double> trace;
  int iterations = 0;
};

namespace detail {

template <int Dim>
PointMatrix<Dim> sample_covariance(std::span<const Point<Dim>> pts, const Point<Dim>& mean) {
  PointMatrix<Dim> s = PointMatrix<Dim>::Zero();
  for (const auto& p : pts) s += (p - mean) * (p - mean).transpose();
  return s / static_cast<double>(pts.size());
}

// k-means++ seeding followed by a few Lloyd iterations; returns a hard assignment.
template <int Dim>
std::vector<std::size_t> kmeans_assign(std::span<const Point<Dim>> pts, std::size_t m, Rng& rng, int iterations) {
  const std::size_t n = pts.size();
  std::vector<Point<Dim>> centers;
  centers.push_back(pts[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (centers.size() < m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (pts[i] - centers.back()).squaredNorm());
      total += d2[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = std::uniform_real_distribution<double>(0.0, total)(rng);
      for (; pick + 1 < n; ++pick) {
        u -= d2[pick];
        if (u < 0.0) break;
      }
    } else {
      pick = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    }
    centers.push_back(pts[pick]);
  }
  std::vector<std::size_t> label(n, 0);
  for (int it = 0; it <= iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < m; ++k) {
        const double d = (pts[i] - centers[k]).squaredNorm();
        if (d < best) best = d, label[i] = k;
      }
    }
    if (it == iterations) break;
    std::vector<Point<Dim>> sums(m, Point<Dim>::Zero());
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) sums[label[i]] += pts[i], ++counts[label[i]];
    for (std::size_t k = 0; k < m; ++k)
      if (counts[k] > 0) centers[k] = sums[k] / static_cast<double>(counts[k]);
  }
  return label;
}

template <int Dim>
GaussianMixture<Dim> init_from_labels(std::span<const Point<Dim>> pts, const std::vector<std::size_t>& label,
                                      std::size_t m, double floor) {
  using Mat = PointMatrix<Dim>;
  const std::size_t n = pts.size();
  Point<Dim> global_mean = Point<Dim>::Zero();
  for (const auto& p : pts) global_mean += p;
  global_mean /= static_cast<double>(n);
  const Mat global_cov = sample_covariance<Dim>(pts, global_mean) + floor * Mat::Identity();

  std::vector<typename GaussianMixture<Dim>::Component> comps(m);
  std::vector<std::vector<Point<Dim>>> members(m);
  for (std::size_t i = 0; i < n; ++i) members[label[i]].push_back(pts[i]);
  for (std::size_t k = 0; k < m; ++k) {
    auto& c = comps[k];
    const auto& mk = members[k];
    c.weight = (static_cast<double>(mk.size()) + 1.0) / static_cast<double>(n + m);
    if (mk.empty()) {
      c.mean = global_mean;
      c.covariance = global_cov;
      continue;
    }
    c.mean = Point<Dim>::Zero();
    for (const auto& p : mk) c.mean += p;
    c.mean /= static_cast<double>(mk.size());
    c.covariance = mk.size() >= 2 ? Mat(sample_covariance<Dim>(mk, c.mean) + floor * Mat::Identity()) : global_cov;
  }
  return GaussianMixture<Dim>(std::move(comps));
}

}  // namespace detail

/// Runs EM from `initial` for up to options.max_iterations iterations.
template <int Dim>
EmFit<Dim> em_refine(std::span<const Point<Dim>> pts, GaussianMixture<Dim> initial, const EmOptions& options) {
  using Vec = Point<Dim>;
  using Mat = PointMatrix<Dim>;
  const std::size_t n = pts.size();
  const std::size_t m = initial.size();
  EmFit<Dim> fit{std::move(initial), 0.0, {}, 0};
  Eigen::MatrixXd resp(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));

  // E-step on the current model; returns its log-likelihood.
  auto expectation = [&](const GaussianMixture<Dim>& model) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < m; ++k) {
        const double v = model.component_log_density(k, pts[i]);
        resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = v;
        best = std::max(best, v);
      }
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        double& r = resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
        r = std::exp(r - best);
        s += r;
      }
      for (std::size_t k = 0; k < m; ++k) resp(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) /= s;
      ll += best + std::log(s);
    }
    return ll;
  };

  double ll = expectation(fit.model);
  fit.trace.push_back(ll);
  for (int it = 0; it < options.max_iterations; ++it) {
    std::vector<typename GaussianMixture<Dim>::Component> comps(m);
    const double min_mass = 1e-10;
    for (std::size_t k = 0; k < m; ++k) {
      const auto col = resp.col(static_cast<Eigen::Index>(k));
      const double nk = col.sum();
      auto& c = comps[k];
      if (nk < min_mass) {
        // Empty component: keep its shape, give it negligible mass.
        c = fit.model.component(k);
        c.weight = min_mass;
        continue;
      }
      c.weight = nk;
      c.mean = Vec::Zero();
      for (std::size_t i = 0; i < n; ++i) c.mean += col(static_cast<Eigen::Index>(i)) * pts[i];
      c.mean /= nk;
      Mat cov = Mat::Zero();
      for (std::size_t i = 0; i < n; ++i) {
        const Vec d = pts[i] - c.mean;
        cov += col(static_cast<Eigen::Index>(i)) * d * d.transpose();
      }
      c.covariance = cov / nk + options.covariance_floor * Mat::Identity();
    }
    double total = 0.0;
    for (const auto& c : comps) total += c.weight;
    for (auto& c : comps) c.weight /= total;
    GaussianMixture<Dim> next(std::move(comps));
    const double next_ll = expectation(next);
    fit.model = std::move(next);
    fit.trace.push_back(next_ll);
    fit.iterations = it + 1;
    const double gain = next_ll - ll;
    ll = next_ll;
    if (gain < options.tolerance * std::max(1.0, std::abs(ll))) break;
  }
  fit.log_likelihood = ll;
  return fit;
}

/// Fits an m-component mixture by EM from k-means++ starts derived from `seed`.
template <int Dim>
EmFit<Dim> fit_gmm(std::span<const Point<Dim>> pts, std::size_t m, std::uint64_t seed, const EmOptions& options = {}) {
  if (m == 0) throw ArgumentError("fit_gmm: component count must be >= 1");
  if (m > pts.size())
    throw ArgumentError("fit_gmm: " + std::to_string(m) + " components requested for " + std::to_string(pts.size()) +
                        " points");
  std::optional<EmFit<Dim>> best;
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    Rng rng = make_rng(derive_seed(seed, {static_cast<std::uint64_t>(m), static_cast<std::uint64_t>(r)}));
    const auto labels = detail::kmeans_assign<Dim>(pts, m, rng, options.kmeans_iterations);
    auto fit = em_refine<Dim>(pts, detail::init_from_labels<Dim>(pts, labels, m, options.covariance_floor), options);
    if (!best || fit.log_likelihood > best->log_likelihood) best = std::move(fit);
    if (m == 1) break;  // deterministic start, restarts add nothing
  }
  return std::move(*best);
}

template <int Dim>
struct BicSelection {
  std::size_t components = 0;
  EmFit<Dim> fit;
  /// (m, BIC) for every candidate, in candidate order.
  std::vector<std::pair<std::size_t, double>> scores;
};

/// Fits each candidate order and keeps the lowest BIC; ties go to the smaller m.
template <int Dim>
BicSelection<Dim> select_components_bic(std::span<const Point<Dim>> pts, const std::vector<std::size_t>& candidates,
                                        std::uint64_t seed, const EmOptions& options = {}) {
  if (candidates.empty()) throw ArgumentError("select_components_bic: candidate list is empty");
  std::optional<BicSelection<Dim>> best;
  std::vector<std::pair<std::size_t, double>> scores;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t m : candidates) {
    auto fit = fit_gmm<Dim>(pts, m, seed, options);
    const double score = bic_score(fit.model.free_parameters(), fit.log_likelihood, pts.size());
    scores.emplace_back(m, score);
    if (score < best_score || (score == best_score && best && m < best->components)) {
      best_score = score;
      best = BicSelection<Dim>{m, std::move(fit), {}};
    }
  }
  best->scores = std::move(scores);
  return std::move(*best);
}

// --- 1-D mixture CDF and quantile ------------------------------------------

/// Lower and upper tail probabilities of a 1-D mixture, each accurate in its own tail.
struct TailPair {
  double lower = 0.5;
  double upper = 0.5;
};

inline TailPair mixture_tails(const GaussianMixture<1>& mix, double x) {
  TailPair t{0.0, 0.0};
  for (const auto& c : mix.components()) {
    const double s = (x - c.mean(0)) / std::sqrt(c.covariance(0, 0)) / std::numbers::sqrt2;
    t.lower += c.weight * 0.5 * std::erfc(-s);
    t.upper += c.weight * 0.5 * std::erfc(s);
  }
  return t;
}

inline double mixture_cdf(const GaussianMixture<1>& mix, double x) { return mixture_tails(mix, x).lower; }

/// Inverse CDF by bisection on [mean - 12 max-sigma, mean + 12 max-sigma]. The
/// target is given as a tail pair so both tails keep full relative precision;
/// the smaller of the two is the one matched.
inline double mixture_quantile(const GaussianMixture<1>& mix, TailPair target) {
  if (!(target.lower >= 0.0 && target.upper >= 0.0) || !std::isfinite(target.lower) || !std::isfinite(target.upper))
    throw FitError("mixture quantile requested for a non-finite probability");
  double max_sigma = 0.0;
  for (const auto& c : mix.components()) max_sigma = std::max(max_sigma, std::sqrt(c.covariance(0, 0)));
  const double centre = mix.mean()(0);
  double lo = centre - 12.0 * max_sigma;
  double hi = centre + 12.0 * max_sigma;
  const bool use_lower = target.lower <= target.upper;
  // f(x) is increasing in x for both branches.
  auto f = [&](double x) {
    const TailPair t = mixture_tails(mix, x);
    return use_lower ? t.lower - target.lower : target.upper - t.upper;
  };
  if (f(lo) > 0.0) return lo;
  if (f(hi) < 0.0) return hi;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) < 0.0) lo = mid;
    else hi = mid;
    if (hi - lo <= 1e-13 * std::max(1.0, std::abs(mid))) break;
  }
  return 0.5 * (lo + hi);
}

inline double mixture_quantile(const GaussianMixture<1>& mix, double u) { return mixture_quantile(mix, {u, 1.0 - u}); }

/// Wraps scalar samples as 1-D points.
inline PointList<1> as_points_1d(std::span<const double> values) {
  PointList<1> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(Point<1>::Constant(v));
  return out;
}

}  // namespace layoutforge
