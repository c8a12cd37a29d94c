#pragma once

// DDPM machinery over (C, H, W) tensors: noise schedules, the closed-form
// forward marginal, ancestral reverse steps and the empirical-Bayes denoiser.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "layoutforge/errors.hpp"
#include "layoutforge/parallel.hpp"
#include "layoutforge/random.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

enum class VarianceRule { beta, beta_tilde };

inline VarianceRule parse_variance_rule(const std::string& s) {
  if (s == "beta") return VarianceRule::beta;
  if (s == "beta-tilde" || s == "beta_tilde") return VarianceRule::beta_tilde;
  throw ArgumentError("unknown variance rule '" + s + "' (expected beta or beta-tilde)");
}

inline std::string to_string(VarianceRule r) { return r == VarianceRule::beta ? "beta" : "beta-tilde"; }

/// Tables for a T-step schedule. All accessors take the 1-based step t in [1, T];
/// alpha_bar(0) is 1 by convention.
class NoiseSchedule {
public:
  NoiseSchedule(std::vector<double> betas, VarianceRule rule) : betas_(std::move(betas)), rule_(rule) {
    if (betas_.empty()) throw ArgumentError("noise schedule needs at least one step");
    alpha_bars_.assign(1, 1.0);
    for (double b : betas_) {
      if (!(b > 0.0 && b < 1.0)) throw ArgumentError("noise schedule betas must lie in (0, 1)");
      alphas_.push_back(1.0 - b);
      alpha_bars_.push_back(alpha_bars_.back() * (1.0 - b));
    }
    for (std::size_t t = 1; t <= betas_.size(); ++t) {
      const double tilde = (1.0 - alpha_bars_[t - 1]) / (1.0 - alpha_bars_[t]) * betas_[t - 1];
      beta_tildes_.push_back(tilde);
      sigmas_.push_back(std::sqrt(rule_ == VarianceRule::beta ? betas_[t - 1] : tilde));
    }
  }

  /// Betas interpolated linearly from beta_start to beta_end, endpoints included.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end, VarianceRule rule = VarianceRule::beta_tilde) {
    if (steps < 1) throw ArgumentError("make_linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
      throw ArgumentError("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t)
      betas[static_cast<std::size_t>(t)] =
          steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * t / static_cast<double>(steps - 1);
    return NoiseSchedule(std::move(betas), rule);
  }

  /// Linear schedule with the usual 1e-4..0.02 range rescaled by 1000 / T, so that
  /// short chains still end close to pure noise.
  static NoiseSchedule default_for(int steps, VarianceRule rule = VarianceRule::beta_tilde) {
    const double scale = 1000.0 / steps;
    return linear(steps, std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999), rule);
  }

  int steps() const noexcept { return static_cast<int>(betas_.size()); }
  VarianceRule rule() const noexcept { return rule_; }
  double beta(int t) const { return betas_.at(index(t)); }
  double alpha(int t) const { return alphas_.at(index(t)); }
  double alpha_bar(int t) const {
    if (t < 0 || t > steps()) throw ArgumentError("schedule step out of range");
    return alpha_bars_[static_cast<std::size_t>(t)];
  }
  double beta_tilde(int t) const { return beta_tildes_.at(index(t)); }
  double sigma(int t) const { return sigmas_.at(index(t)); }

private:
  std::size_t index(int t) const {
    if (t < 1 || t > steps())
      throw ArgumentError("schedule step " + std::to_string(t) + " outside [1, " + std::to_string(steps()) + "]");
    return static_cast<std::size_t>(t - 1);
  }

  std::vector<double> betas_, alphas_, alpha_bars_, beta_tildes_, sigmas_;
  VarianceRule rule_;
};

/// Predicts the injected noise from (x_t, t, counting category).
template <class D>
concept NoisePredictor = requires(const D& d, const Tensor& x, int t, std::size_t category) {
  { d(x, t, category) } -> std::convertible_to<Tensor>;
};

inline Tensor standard_normal_tensor(TensorShape shape, Rng& rng) {
  Tensor out(shape);
  std::normal_distribution<double> normal;
  for (double& v : out.values()) v = normal(rng);
  return out;
}

struct NoisedSample {
  Tensor x_t;
  Tensor noise;
};

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, eps drawn from `seed`.
inline NoisedSample forward_marginal_with_noise(const NoiseSchedule& s, const Tensor& x0, int t, std::uint64_t seed) {
  if (t < 1 || t > s.steps()) throw ArgumentError("forward_marginal_sample: step out of range");
  Rng rng = make_rng(seed);
  Tensor eps = standard_normal_tensor(x0.shape(), rng);
  const double a = std::sqrt(s.alpha_bar(t)), b = std::sqrt(1.0 - s.alpha_bar(t));
  Tensor xt(x0.shape());
  for (std::size_t k = 0; k < x0.size(); ++k) xt.values()[k] = a * x0.values()[k] + b * eps.values()[k];
  return {std::move(xt), std::move(eps)};
}

inline Tensor forward_marginal_sample(const NoiseSchedule& s, const Tensor& x0, int t, std::uint64_t seed) {
  return forward_marginal_with_noise(s, x0, t, seed).x_t;
}

/// One ancestral step: mean (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t),
/// plus sigma_t z for t > 1.
template <NoisePredictor D>
Tensor reverse_step(const NoiseSchedule& s, const D& denoiser, const Tensor& xt, int t, std::size_t category,
                    std::uint64_t seed) {
  if (t < 1 || t > s.steps()) throw ArgumentError("reverse_step: step out of range");
  const Tensor eps = denoiser(xt, t, category);
  if (eps.shape() != xt.shape())
    throw ContractError("denoiser returned shape " + eps.shape().str() + " for input " + xt.shape().str());
  const double inv_sqrt_alpha = 1.0 / std::sqrt(s.alpha(t));
  const double coef = (1.0 - s.alpha(t)) / std::sqrt(1.0 - s.alpha_bar(t));
  Tensor out(xt.shape());
  for (std::size_t k = 0; k < xt.size(); ++k)
    out.values()[k] = inv_sqrt_alpha * (xt.values()[k] - coef * eps.values()[k]);
  if (t > 1) {
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal;
    const double sigma = s.sigma(t);
    for (double& v : out.values()) v += sigma * normal(rng);
  }
  return out;
}

/// Full reverse chain from x_T ~ N(0, I) down to x_0.
template <NoisePredictor D>
Tensor run_reverse_chain(const NoiseSchedule& s, const D& denoiser, std::size_t category, TensorShape shape,
                         std::uint64_t seed) {
  Rng rng = make_rng(derive_seed(seed, {0}));
  Tensor x = standard_normal_tensor(shape, rng);
  for (int t = s.steps(); t >= 1; --t)
    x = reverse_step(s, denoiser, x, t, category, derive_seed(seed, {1, static_cast<std::uint64_t>(t)}));
  return x;
}

/// Seed of the i-th chain of a sample_layouts call.
inline std::uint64_t chain_seed(std::uint64_t seed, std::size_t category, std::size_t i) {
  return derive_seed(seed, {static_cast<std::uint64_t>(category), static_cast<std::uint64_t>(i)});
}

/// n independent reverse chains for one category. Chains run on the worker pool;
/// chain i always uses chain_seed(seed, category, i), so output is independent of
/// the worker count.
template <NoisePredictor D>
std::vector<Tensor> sample_layouts(const NoiseSchedule& s, const D& denoiser, std::size_t category, std::size_t n,
                                   TensorShape shape, std::uint64_t seed) {
  std::vector<Tensor> out(n);
  parallel_for(n, [&](std::size_t i) { out[i] = run_reverse_chain(s, denoiser, category, shape, chain_seed(seed, category, i)); });
  return out;
}

/// Posterior-mean noise predictor for an empirical clean-data distribution: for
/// each category, the uniform distribution over that category's stored tensors.
/// This is the exact minimizer of the noise-prediction MSE for that data.
class EmpiricalBayesDenoiser {
public:
  EmpiricalBayesDenoiser(const NoiseSchedule& schedule, const std::map<std::size_t, std::vector<Tensor>>& sets)
      : schedule_(schedule) {
    bool first = true;
    for (const auto& [category, tensors] : sets) {
      if (tensors.empty()) throw ArgumentError("empirical-Bayes denoiser: category " + std::to_string(category) + " is empty");
      if (first) shape_ = tensors.front().shape(), first = false;
      Store st;
      st.data.resize(static_cast<Eigen::Index>(shape_.size()), static_cast<Eigen::Index>(tensors.size()));
      for (std::size_t i = 0; i < tensors.size(); ++i) {
        if (tensors[i].shape() != shape_) throw ArgumentError("empirical-Bayes denoiser: tensors differ in shape");
        st.data.col(static_cast<Eigen::Index>(i)) =
            Eigen::Map<const Eigen::VectorXd>(tensors[i].values().data(), static_cast<Eigen::Index>(shape_.size()));
      }
      st.norms = st.data.colwise().squaredNorm().transpose();
      stores_.emplace(category, std::move(st));
    }
  }

  TensorShape shape() const noexcept { return shape_; }
  bool has_category(std::size_t c) const { return stores_.count(c) > 0; }
  std::vector<std::size_t> categories() const {
    std::vector<std::size_t> out;
    for (const auto& [c, st] : stores_) out.push_back(c);
    return out;
  }

  /// Softmax weights w_i proportional to exp(-|x_t - sqrt(abar_t) x0_i|^2 / (2 (1 - abar_t))).
  Eigen::VectorXd posterior_weights(const Tensor& xt, int t, std::size_t category) const {
    const Store& st = store(category);
    if (xt.shape() != shape_) throw ArgumentError("empirical-Bayes denoiser: input shape " + xt.shape().str() + " expected " + shape_.str());
    const double abar = schedule_.alpha_bar(t);
    const auto x = Eigen::Map<const Eigen::VectorXd>(xt.values().data(), static_cast<Eigen::Index>(xt.size()));
    const Eigen::VectorXd dots = st.data.transpose() * x;
    const Eigen::VectorXd d2 = (x.squaredNorm() - 2.0 * std::sqrt(abar) * dots.array() + abar * st.norms.array()).matrix();
    Eigen::VectorXd logits = -d2 / (2.0 * (1.0 - abar));
    const double top = logits.maxCoeff();
    Eigen::VectorXd w = (logits.array() - top).exp().matrix();
    return w / w.sum();
  }

  /// Posterior mean of x0 given x_t.
  Tensor predict_clean(const Tensor& xt, int t, std::size_t category) const {
    const Eigen::VectorXd w = posterior_weights(xt, t, category);
    const Eigen::VectorXd x0 = store(category).data * w;
    return Tensor(shape_, std::vector<double>(x0.data(), x0.data() + x0.size()));
  }

  Tensor operator()(const Tensor& xt, int t, std::size_t category) const {
    const Tensor x0 = predict_clean(xt, t, category);
    const double a = std::sqrt(schedule_.alpha_bar(t)), b = std::sqrt(1.0 - schedule_.alpha_bar(t));
    Tensor eps(shape_);
    for (std::size_t k = 0; k < eps.size(); ++k) eps.values()[k] = (xt.values()[k] - a * x0.values()[k]) / b;
    return eps;
  }

private:
  struct Store {
    Eigen::MatrixXd data;
    Eigen::VectorXd norms;
  };

  const Store& store(std::size_t category) const {
    const auto it = stores_.find(category);
    if (it == stores_.end()) throw ArgumentError("empirical-Bayes denoiser: no training tensors for category " + std::to_string(category));
    return it->second;
  }

  NoiseSchedule schedule_;
  TensorShape shape_;
  std::map<std::size_t, Store> stores_;
};

inline Tensor empirical_bayes_epsilon(const EmpiricalBayesDenoiser& d, const Tensor& xt, int t, std::size_t category) {
  return d(xt, t, category);
}

/// |eps - eps_hat|^2 / d for x_t drawn with `seed`; the denoiser sees `category`.
template <NoisePredictor D>
double simple_loss(const NoiseSchedule& s, const D& denoiser, const Tensor& x0, int t, std::uint64_t seed,
                   std::size_t category = 0) {
  const auto [xt, eps] = forward_marginal_with_noise(s, x0, t, seed);
  const Tensor pred = denoiser(xt, t, category);
  if (pred.shape() != xt.shape()) throw ContractError("denoiser returned the wrong shape");
  return squared_distance(eps, pred) / static_cast<double>(eps.size());
}

}  // namespace layoutforge
