#pragma once

#include "gpnp/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace gpnp {

struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t channels = 1;

  std::size_t size() const noexcept { return height * width * channels; }
  bool valid() const noexcept { return height >= 1 && width >= 1 && channels >= 1; }
  friend bool operator==(const Shape &, const Shape &) = default;
};

inline std::string to_string(const Shape &s) {
  return std::to_string(s.height) + "x" + std::to_string(s.width) + "x" +
         std::to_string(s.channels);
}

/// Real-valued image stored row-major with interleaved channels:
/// index = (row * width + col) * channels + channel.
class ImageTensor {
public:
  ImageTensor() = default;

  explicit ImageTensor(Shape shape, double fill = 0.0) : shape_(shape) {
    if (!shape.valid())
      throw GeometryError("image shape must have all dimensions >= 1, got " + to_string(shape));
    data_.assign(shape.size(), fill);
  }

  ImageTensor(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid())
      throw GeometryError("image shape must have all dimensions >= 1, got " + to_string(shape));
    if (data_.size() != shape.size())
      throw GeometryError("data length " + std::to_string(data_.size()) +
                          " does not match shape " + to_string(shape));
    if (!all_finite())
      throw ParameterError("image data contains non-finite values");
  }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t height() const noexcept { return shape_.height; }
  std::size_t width() const noexcept { return shape_.width; }
  std::size_t channels() const noexcept { return shape_.channels; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double> &values() const noexcept { return data_; }

  double &operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double &at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }
  double at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }

  Eigen::Map<Eigen::VectorXd> vec() noexcept {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }
  Eigen::Map<const Eigen::VectorXd> vec() const noexcept {
    return {data_.data(), static_cast<Eigen::Index>(data_.size())};
  }

  bool all_finite() const noexcept {
    for (double v : data_)
      if (!std::isfinite(v))
        return false;
    return true;
  }

  static ImageTensor from_vector(Shape shape, const Eigen::VectorXd &v) {
    return ImageTensor(shape, std::vector<double>(v.data(), v.data() + v.size()));
  }

  friend bool operator==(const ImageTensor &, const ImageTensor &) = default;

private:
  Shape shape_{};
  std::vector<double> data_;
};

inline void require_same_shape(const ImageTensor &a, const ImageTensor &b, const char *what) {
  if (a.shape() != b.shape())
    throw GeometryError(std::string(what) + ": shape mismatch " + to_string(a.shape()) +
                        " vs " + to_string(b.shape()));
}

/// Seeded stream of standard-normal draws. Tensors are filled in storage
/// (row-major, channel-interleaved) order, one draw per entry.
///
/// A "silent" source returns exact zeros; it exists so that the deterministic
/// part of every generator can be checked in isolation.
class RandomSource {
public:
  explicit RandomSource(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  static RandomSource silent() {
    RandomSource r(0);
    r.silent_ = true;
    return r;
  }

  /// Independent stream for sub-task `index` (e.g. a trial), derived from (seed, index).
  static RandomSource child(std::uint64_t seed, std::uint64_t index) {
    return RandomSource(mix(seed ^ mix(index + 0x9e3779b97f4a7c15ULL)));
  }

  std::uint64_t seed() const noexcept { return seed_; }
  bool is_silent() const noexcept { return silent_; }

  double normal() { return silent_ ? 0.0 : normal_(engine_); }

  void fill_normal(std::span<double> out) {
    for (double &v : out)
      v = normal();
  }

  ImageTensor normal_tensor(Shape shape) {
    ImageTensor t(shape);
    fill_normal(t.data());
    return t;
  }

  Eigen::VectorXd normal_vector(Eigen::Index n) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i)
      v[i] = normal();
    return v;
  }

  std::mt19937_64 &engine() noexcept { return engine_; }

private:
  // splitmix64 finalizer
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  bool silent_ = false;
};

/// Parameters of the annealed sampler.
struct GPnPParams {
  double alpha = 1.3;      ///< denoiser-strength factor, the denoiser runs at alpha * sigma
  double beta = 0.25;      ///< gamma^2 / sigma^2
  double sigma_max = 0.5;
  double sigma_min = 0.005;
  std::size_t n_steps = 100;

  void validate() const {
    if (!(beta > 0.0 && beta < 1.0))
      throw ParameterError("beta must lie in (0, 1), got " + std::to_string(beta));
    if (!(alpha >= 1.0) || !std::isfinite(alpha))
      throw ParameterError("alpha must be >= 1, got " + std::to_string(alpha));
    if (!(sigma_min > 0.0) || !std::isfinite(sigma_max) || !(sigma_min <= sigma_max))
      throw ParameterError("need 0 < sigma_min <= sigma_max, got sigma_min=" +
                           std::to_string(sigma_min) + " sigma_max=" + std::to_string(sigma_max));
    if (n_steps < 1)
      throw ParameterError("n_steps must be >= 1");
  }
};

struct SigmaSchedule {
  std::vector<double> values;
  double ratio = 1.0;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t n) const { return values[n]; }

  /// Index of the level closest to `sigma` (log distance).
  std::size_t nearest(double sigma) const {
    std::size_t best = 0;
    double best_d = std::abs(std::log(values[0] / sigma));
    for (std::size_t n = 1; n < values.size(); ++n) {
      double d = std::abs(std::log(values[n] / sigma));
      if (d < best_d) {
        best_d = d;
        best = n;
      }
    }
    return best;
  }
};

/// sigma_n = a^n sigma_max for n = 0..N-1 with a = (sigma_min / sigma_max)^(1/N).
inline SigmaSchedule geometric_schedule(const GPnPParams &params) {
  params.validate();
  SigmaSchedule s;
  const double n = static_cast<double>(params.n_steps);
  s.ratio = std::pow(params.sigma_min / params.sigma_max, 1.0 / n);
  s.values.resize(params.n_steps);
  for (std::size_t k = 0; k < params.n_steps; ++k)
    s.values[k] = std::pow(s.ratio, static_cast<double>(k)) * params.sigma_max;
  return s;
}

/// Chain initialization: 1/2 + sigma_max * N(0, I).
inline ImageTensor init_state(double sigma_max, Shape shape, RandomSource &rng) {
  if (!(sigma_max >= 0.0) || !std::isfinite(sigma_max))
    throw ParameterError("sigma_max must be finite and >= 0");
  ImageTensor x(shape);
  for (double &v : x.data())
    v = 0.5 + sigma_max * rng.normal();
  return x;
}

} // namespace gpnp
