#pragma once

#include "gpnp/core.hpp"

#include <algorithm>
#include <cmath>
#include <concepts>
#include <memory>
#include <numbers>
#include <vector>

namespace gpnp {

/// Anything that removes AWGN of standard deviation `sigma` from an image.
/// Output must have the input's shape.
template <class D>
concept Denoiser = requires(const D &d, const ImageTensor &x, double sigma) {
  { d.denoise(x, sigma) } -> std::convertible_to<ImageTensor>;
};

struct IdentityDenoiser {
  ImageTensor denoise(const ImageTensor &x, double) const { return x; }
};

/// (tau^2 x + sigma^2 mu0) / (tau^2 + sigma^2), elementwise. A single-entry
/// `mu0` is broadcast over the whole image.
inline ImageTensor gaussian_conjugate_denoise(const ImageTensor &x, double sigma,
                                              const ImageTensor &mu0, double tau) {
  if (!(tau > 0.0))
    throw ParameterError("gaussian denoiser: tau must be > 0");
  if (mu0.size() != 1)
    require_same_shape(x, mu0, "gaussian denoiser");
  const double t2 = tau * tau;
  const double s2 = sigma * sigma;
  const double denom = t2 + s2;
  ImageTensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = mu0.size() == 1 ? mu0[0] : mu0[i];
    out[i] = (t2 * x[i] + s2 * m) / denom;
  }
  return out;
}

/// Exact MMSE denoiser for the i.i.d. Gaussian prior N(mu0, tau^2 I).
class GaussianConjugateDenoiser {
public:
  GaussianConjugateDenoiser(ImageTensor mu0, double tau) : mu0_(std::move(mu0)), tau_(tau) {
    if (!(tau > 0.0))
      throw ParameterError("gaussian denoiser: tau must be > 0");
  }
  GaussianConjugateDenoiser(double mu0, double tau)
      : GaussianConjugateDenoiser(ImageTensor(Shape{1, 1, 1}, mu0), tau) {}

  ImageTensor denoise(const ImageTensor &x, double sigma) const {
    return gaussian_conjugate_denoise(x, sigma, mu0_, tau_);
  }

  const ImageTensor &mu0() const noexcept { return mu0_; }
  double tau() const noexcept { return tau_; }

private:
  ImageTensor mu0_;
  double tau_;
};

/// Sliding-block DCT hard thresholding.
///
/// Each channel is symmetrically padded, cut into block_size x block_size
/// blocks at stride block_size / 2, transformed with the orthonormal DCT-II,
/// AC coefficients with |c| < threshold_factor * sigma are zeroed, and the
/// inverse-transformed blocks are averaged back.
class DctThresholdDenoiser {
public:
  explicit DctThresholdDenoiser(std::size_t block_size = 8, double threshold_factor = 2.7)
      : block_(block_size), factor_(threshold_factor) {
    if (block_size < 2 || block_size % 2 != 0)
      throw ParameterError("dct denoiser: block_size must be even and >= 2");
    if (!(threshold_factor >= 0.0))
      throw ParameterError("dct denoiser: threshold_factor must be >= 0");
    const auto b = static_cast<Eigen::Index>(block_);
    basis_.resize(b, b);
    for (Eigen::Index k = 0; k < b; ++k) {
      const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(b));
      for (Eigen::Index i = 0; i < b; ++i)
        basis_(k, i) = scale * std::cos(std::numbers::pi * (2.0 * i + 1.0) * k / (2.0 * b));
    }
  }

  std::size_t block_size() const noexcept { return block_; }
  double threshold_factor() const noexcept { return factor_; }

  ImageTensor denoise(const ImageTensor &x, double sigma) const {
    if (sigma == 0.0)
      return x;
    if (!(sigma > 0.0))
      throw ParameterError("dct denoiser: sigma must be >= 0");
    const std::size_t h = x.height(), w = x.width(), nc = x.channels();
    const std::size_t stride = block_ / 2;
    const std::size_t hp = padded_extent(h), wp = padded_extent(w);
    const auto b = static_cast<Eigen::Index>(block_);
    const double thr = factor_ * sigma;

    ImageTensor out(x.shape());
    Eigen::MatrixXd padded(hp, wp), acc(hp, wp), blk(b, b), coef(b, b);
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t r = 0; r < hp; ++r)
        for (std::size_t q = 0; q < wp; ++q)
          padded(r, q) = x.at(reflect(r, h), reflect(q, w), c);
      acc.setZero();
      for (std::size_t r0 = 0; r0 + block_ <= hp; r0 += stride) {
        for (std::size_t q0 = 0; q0 + block_ <= wp; q0 += stride) {
          blk = padded.block(r0, q0, b, b);
          coef.noalias() = basis_ * blk * basis_.transpose();
          for (Eigen::Index i = 0; i < b; ++i)
            for (Eigen::Index j = 0; j < b; ++j)
              if ((i | j) != 0 && std::abs(coef(i, j)) < thr)
                coef(i, j) = 0.0;
          acc.block(r0, q0, b, b).noalias() += basis_.transpose() * coef * basis_;
        }
      }
      // Interior pixels of the padded frame are covered by exactly four blocks.
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t q = 0; q < w; ++q)
          out.at(r, q, c) = 0.25 * acc(r + stride, q + stride);
    }
    return out;
  }

private:
  // Leading pad of one stride, trailing pad up to a multiple of the block size
  // with at least one stride of margin.
  std::size_t padded_extent(std::size_t n) const {
    const std::size_t stride = block_ / 2;
    return (n + 2 * stride + block_ - 1) / block_ * block_;
  }

  // Padded index -> source index, half-sample symmetric reflection.
  std::size_t reflect(std::size_t padded_index, std::size_t n) const {
    const std::size_t stride = block_ / 2;
    auto i = static_cast<long long>(padded_index) - static_cast<long long>(stride);
    const auto len = static_cast<long long>(n);
    const long long period = 2 * len;
    i %= period;
    if (i < 0)
      i += period;
    return static_cast<std::size_t>(i < len ? i : period - 1 - i);
  }

  std::size_t block_;
  double factor_;
  Eigen::MatrixXd basis_;
};

/// Score estimate (Denoise(x; sigma) - x) / sigma^2.
template <Denoiser D>
ImageTensor score_from_denoiser(const D &d, const ImageTensor &x, double sigma) {
  if (!(sigma > 0.0))
    throw ParameterError("score_from_denoiser: sigma must be > 0");
  ImageTensor out = d.denoise(x, sigma);
  require_same_shape(out, x, "score_from_denoiser");
  const double inv = 1.0 / (sigma * sigma);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (out[i] - x[i]) * inv;
  return out;
}

/// Approximate prior proximal generator
///   (1 - beta) v + beta Denoise(v; alpha sigma) + sqrt(beta) sigma W.
/// The denoiser is called first, then one normal draw per entry in storage order.
template <Denoiser D>
ImageTensor prior_proximal_generator(const D &d, const ImageTensor &v, double sigma, double beta,
                                     double alpha, RandomSource &rng) {
  if (!(beta > 0.0 && beta < 1.0))
    throw ParameterError("prior generator: beta must lie in (0, 1)");
  if (!(sigma > 0.0))
    throw ParameterError("prior generator: sigma must be > 0");
  ImageTensor den = d.denoise(v, alpha * sigma);
  require_same_shape(den, v, "prior generator");
  const double noise = std::sqrt(beta) * sigma;
  ImageTensor out(v.shape());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = (1.0 - beta) * v[i] + beta * den[i] + noise * rng.normal();
  return out;
}

/// Type-erased denoiser handle for run-time selection.
class AnyDenoiser {
public:
  template <Denoiser D>
    requires(!std::same_as<std::remove_cvref_t<D>, AnyDenoiser>)
  AnyDenoiser(D d) : impl_(std::make_shared<Model<D>>(std::move(d))) {}

  template <Denoiser D>
  explicit AnyDenoiser(std::shared_ptr<D> d) : impl_(std::make_shared<Shared<D>>(std::move(d))) {}

  ImageTensor denoise(const ImageTensor &x, double sigma) const { return impl_->denoise(x, sigma); }

private:
  struct Concept {
    virtual ~Concept() = default;
    virtual ImageTensor denoise(const ImageTensor &x, double sigma) const = 0;
  };
  template <class D> struct Model final : Concept {
    explicit Model(D d) : d(std::move(d)) {}
    ImageTensor denoise(const ImageTensor &x, double sigma) const override {
      return d.denoise(x, sigma);
    }
    D d;
  };
  template <class D> struct Shared final : Concept {
    explicit Shared(std::shared_ptr<D> d) : d(std::move(d)) {}
    ImageTensor denoise(const ImageTensor &x, double sigma) const override {
      return d->denoise(x, sigma);
    }
    std::shared_ptr<D> d;
  };

  std::shared_ptr<const Concept> impl_;
};

} // namespace gpnp
