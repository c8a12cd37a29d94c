#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "layoutforge/errors.hpp"

namespace layoutforge {

struct TensorShape {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t plane() const noexcept { return height * width; }
  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const TensorShape&, const TensorShape&) = default;

  std::string str() const {
    return "(" + std::to_string(channels) + ", " + std::to_string(height) + ", " + std::to_string(width) + ")";
  }
};

/// Dense channel-major (C, H, W) array of doubles.
class Tensor {
public:
  Tensor() = default;
  explicit Tensor(TensorShape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(TensorShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size())
      throw ArgumentError("tensor data size " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }

  const TensorShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& at(std::size_t c, std::size_t i, std::size_t j) { return data_[(c * shape_.height + i) * shape_.width + j]; }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * shape_.height + i) * shape_.width + j];
  }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  std::span<double> channel(std::size_t c) { return std::span<double>(data_).subspan(c * shape_.plane(), shape_.plane()); }
  std::span<const double> channel(std::size_t c) const {
    return std::span<const double>(data_).subspan(c * shape_.plane(), shape_.plane());
  }

  /// Channels [first, first + count) as a new tensor.
  Tensor slice_channels(std::size_t first, std::size_t count) const {
    if (first + count > shape_.channels) throw ArgumentError("channel slice out of range");
    TensorShape s{count, shape_.height, shape_.width};
    auto begin = data_.begin() + static_cast<std::ptrdiff_t>(first * shape_.plane());
    return Tensor(s, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(s.size())));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

private:
  TensorShape shape_;
  std::vector<double> data_;
};

/// Stacks a and b along the channel axis.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.shape().height != b.shape().height || a.shape().width != b.shape().width)
    throw ArgumentError("concat_channels: spatial shapes differ " + a.shape().str() + " vs " + b.shape().str());
  std::vector<double> data;
  data.reserve(a.size() + b.size());
  data.insert(data.end(), a.values().begin(), a.values().end());
  data.insert(data.end(), b.values().begin(), b.values().end());
  return Tensor({a.shape().channels + b.shape().channels, a.shape().height, a.shape().width}, std::move(data));
}

inline double squared_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ArgumentError("squared_distance: shape mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a.values()[k] - b.values()[k];
    s += d * d;
  }
  return s;
}

inline double max_abs_difference(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ArgumentError("max_abs_difference: shape mismatch");
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
  return m;
}

}  // namespace layoutforge
