#pragma once

// Spatial-FID: Frechet distance between Gaussian fits of spatial features
// extracted from two sets of layout maps.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "layoutforge/errors.hpp"
#include "layoutforge/parallel.hpp"
#include "layoutforge/tensor.hpp"

namespace layoutforge {

/// Maps layout channels (num_types, H, W) to a fixed-length feature vector.
template <class E>
concept FeatureExtractor = requires(const E& e, const Tensor& layout) {
  { e(layout) } -> std::convertible_to<Eigen::VectorXd>;
};

/// Multi-resolution count pyramid. Level l (1-based) splits every channel into
/// 2^(l-1) x 2^(l-1) blocks and records the number of foreground pixels
/// (value >= 0.5) per block. Layout: level-major, then channel, then block row-major.
class PyramidExtractor {
public:
  explicit PyramidExtractor(int levels = 4) : levels_(levels) {
    if (levels_ < 1) throw ArgumentError("pyramid_features: levels must be >= 1");
  }

  int levels() const noexcept { return levels_; }

  std::size_t dimension(std::size_t num_types) const {
    std::size_t per_channel = 0;
    for (int l = 0; l < levels_; ++l) per_channel += std::size_t{1} << (2 * l);
    return num_types * per_channel;
  }

  Eigen::VectorXd operator()(const Tensor& layout) const {
    const auto [types, h, w] = layout.shape();
    const std::size_t finest = std::size_t{1} << (levels_ - 1);
    if (h % finest != 0 || w % finest != 0)
      throw ArgumentError("pyramid_features: grid " + std::to_string(h) + "x" + std::to_string(w) +
                          " is not divisible by " + std::to_string(finest));
    Eigen::VectorXd out(static_cast<Eigen::Index>(dimension(types)));
    Eigen::Index at = 0;
    for (int l = 0; l < levels_; ++l) {
      const std::size_t blocks = std::size_t{1} << l;
      const std::size_t bh = h / blocks, bw = w / blocks;
      for (std::size_t c = 0; c < types; ++c) {
        for (std::size_t bi = 0; bi < blocks; ++bi) {
          for (std::size_t bj = 0; bj < blocks; ++bj) {
            double count = 0.0;
            for (std::size_t i = bi * bh; i < (bi + 1) * bh; ++i)
              for (std::size_t j = bj * bw; j < (bj + 1) * bw; ++j)
                if (layout.at(c, i, j) >= 0.5) count += 1.0;
            out(at++) = count;
          }
        }
      }
    }
    return out;
  }

  /// Index range [begin, end) of level l (1-based) within a feature vector.
  std::pair<std::size_t, std::size_t> level_range(int level, std::size_t num_types) const {
    std::size_t begin = 0;
    for (int l = 0; l < level - 1; ++l) begin += num_types * (std::size_t{1} << (2 * l));
    return {begin, begin + num_types * (std::size_t{1} << (2 * (level - 1)))};
  }

private:
  int levels_;
};

inline Eigen::VectorXd pyramid_features(const Tensor& layout, int levels) { return PyramidExtractor(levels)(layout); }

/// Sample mean and unbiased covariance of a feature set.
struct FeatureStats {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
  std::size_t n = 0;
};

inline FeatureStats fit_stats(std::span<const Eigen::VectorXd> features) {
  if (features.size() < 2) throw ArgumentError("fit_stats: need at least 2 feature vectors");
  const Eigen::Index d = features.front().size();
  Eigen::MatrixXd x(features.size(), d);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (features[i].size() != d) throw ArgumentError("fit_stats: feature vectors differ in dimension");
    x.row(static_cast<Eigen::Index>(i)) = features[i].transpose();
  }
  FeatureStats s;
  s.n = features.size();
  s.mu = x.colwise().mean().transpose();
  const Eigen::MatrixXd centered = x.rowwise() - s.mu.transpose();
  s.sigma = (centered.transpose() * centered) / static_cast<double>(s.n - 1);
  s.sigma = 0.5 * (s.sigma + s.sigma.transpose());
  return s;
}

namespace detail {

/// Symmetric PSD square root via eigendecomposition; eigenvalues below zero are clamped.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

/// Tr((S_a^{1/2} S_b S_a^{1/2})^{1/2}) with negative eigenvalues clamped.
inline double cross_trace(const Eigen::MatrixXd& sa, const Eigen::MatrixXd& sb) {
  const Eigen::MatrixXd root_a = psd_sqrt(sa);
  const Eigen::MatrixXd inner = root_a * sb * root_a;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (inner + inner.transpose()), Eigen::EigenvaluesOnly);
  double cross = 0.0;
  for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) {
    const double ev = es.eigenvalues()(k);
    if (ev > 0.0) cross += std::sqrt(ev);
  }
  return cross;
}

}  // namespace detail

/// Ridge added to both covariances when either was estimated from fewer samples than dimensions.
inline constexpr double kCovarianceShrinkage = 1e-6;

/// |mu_a - mu_b|^2 + Tr(S_a + S_b - 2 (S_a^{1/2} S_b S_a^{1/2})^{1/2}), clamped to >= 0.
inline double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mu.size() != b.mu.size() || a.sigma.rows() != b.sigma.rows() || a.sigma.rows() != a.mu.size())
    throw ArgumentError("frechet_distance: feature dimensions differ");
  if (!a.mu.allFinite() || !b.mu.allFinite() || !a.sigma.allFinite() || !b.sigma.allFinite())
    throw ArgumentError("frechet_distance: non-finite statistics");
  const Eigen::Index d = a.mu.size();
  Eigen::MatrixXd sa = a.sigma, sb = b.sigma;
  const bool rank_deficient = (a.n != 0 && a.n < static_cast<std::size_t>(d)) || (b.n != 0 && b.n < static_cast<std::size_t>(d));
  if (rank_deficient) {
    sa += kCovarianceShrinkage * Eigen::MatrixXd::Identity(d, d);
    sb += kCovarianceShrinkage * Eigen::MatrixXd::Identity(d, d);
  }
  // Both orders, averaged: the result is then bit-identical under swapping a and b.
  const double cross = 0.5 * (detail::cross_trace(sa, sb) + detail::cross_trace(sb, sa));
  const double traces = sa.trace() + sb.trace();
  const double value = (a.mu - b.mu).squaredNorm() + traces - 2.0 * cross;
  return std::max(0.0, value);
}

template <FeatureExtractor E>
std::vector<Eigen::VectorXd> extract_features(std::span<const Tensor> layouts, const E& extractor) {
  std::vector<Eigen::VectorXd> out(layouts.size());
  parallel_for(layouts.size(), [&](std::size_t i) { out[i] = extractor(layouts[i]); });
  return out;
}

/// Frechet distance between feature fits of a reference and a generated layout set.
template <FeatureExtractor E>
double spatial_fid(std::span<const Tensor> reference, std::span<const Tensor> generated, const E& extractor) {
  if (reference.size() < 2 || generated.size() < 2) throw ArgumentError("spatial_fid: each set needs at least 2 layouts");
  const TensorShape shape = reference.front().shape();
  for (const auto& set : {reference, generated})
    for (const auto& t : set)
      if (t.shape() != shape)
        throw ArgumentError("spatial_fid: layout shape " + t.shape().str() + " differs from " + shape.str());
  const auto fr = extract_features(reference, extractor);
  const auto fg = extract_features(generated, extractor);
  return frechet_distance(fit_stats(fr), fit_stats(fg));
}

}  // namespace layoutforge
