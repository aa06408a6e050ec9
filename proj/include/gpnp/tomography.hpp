#pragma once

#include "gpnp/core.hpp"
#include "gpnp/forward.hpp"

#include <Eigen/Sparse>

#include <cmath>
#include <numbers>
#include <vector>

namespace gpnp {

/// Length of the segment of the line {p : p . (cos t, sin t) = offset} inside
/// the axis-aligned square of side 1 centred at (cx, cy).
inline double ray_pixel_chord(double cx, double cy, double offset, double theta) {
  const double c = std::cos(theta), s = std::sin(theta);
  const double p0[2] = {offset * c, offset * s};
  const double d[2] = {-s, c};
  const double lo_box[2] = {cx - 0.5, cy - 0.5};
  const double hi_box[2] = {cx + 0.5, cy + 0.5};
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int k = 0; k < 2; ++k) {
    if (std::abs(d[k]) < 1e-14) {
      if (p0[k] < lo_box[k] || p0[k] > hi_box[k])
        return 0.0;
      continue;
    }
    double t1 = (lo_box[k] - p0[k]) / d[k];
    double t2 = (hi_box[k] - p0[k]) / d[k];
    if (t1 > t2)
      std::swap(t1, t2);
    lo = std::max(lo, t1);
    hi = std::min(hi, t2);
  }
  return std::max(0.0, hi - lo);
}

/// 2D parallel-beam projector on an n x n grid with unit pixel pitch.
///
/// Pixel (row, col) is centred at (col - (n-1)/2, (n-1)/2 - row). View v has
/// angle pi v / n_views; bin j integrates along the line at signed offset
/// j - (n-1)/2 from the origin, with exact ray/pixel intersection lengths.
/// The system matrix is assembled once and stored sparse.
class ParallelBeamProjector {
public:
  ParallelBeamProjector(std::size_t image_size, std::size_t n_views)
      : n_(image_size), views_(n_views) {
    if (n_ < 1 || views_ < 1)
      throw GeometryError("projector: image size and view count must be >= 1");
    build();
  }

  std::size_t image_size() const noexcept { return n_; }
  std::size_t n_views() const noexcept { return views_; }
  std::size_t n_bins() const noexcept { return n_; }
  double angle(std::size_t view) const {
    return std::numbers::pi * static_cast<double>(view) / static_cast<double>(views_);
  }
  Shape image_shape() const noexcept { return {n_, n_, 1}; }

  Eigen::Index rows() const { return static_cast<Eigen::Index>(views_ * n_); }
  Eigen::Index cols() const { return static_cast<Eigen::Index>(n_ * n_); }
  Eigen::VectorXd apply(const Eigen::VectorXd &x) const { return a_ * x; }
  Eigen::VectorXd adjoint(const Eigen::VectorXd &z) const { return a_.transpose() * z; }

  /// Sinogram of `x`, view-major (index view * n_bins + bin).
  Eigen::VectorXd project(const ImageTensor &x) const {
    if (x.channels() != 1 || x.height() != x.width())
      throw GeometryError("projector: expected a square single-channel image, got " +
                          to_string(x.shape()));
    if (x.height() != n_)
      throw GeometryError("projector: expected " + std::to_string(n_) + "x" +
                          std::to_string(n_) + " image, got " + to_string(x.shape()));
    return apply(x.vec());
  }

  ImageTensor backproject(const Eigen::VectorXd &sinogram) const {
    if (sinogram.size() != rows())
      throw GeometryError("projector: sinogram length mismatch");
    return ImageTensor::from_vector(image_shape(), adjoint(sinogram));
  }

  /// Dense system matrix, assembled column by column from single-pixel projections.
  Eigen::MatrixXd materialize() const {
    Eigen::MatrixXd dense(rows(), cols());
    Eigen::VectorXd e = Eigen::VectorXd::Zero(cols());
    for (Eigen::Index j = 0; j < cols(); ++j) {
      e[j] = 1.0;
      dense.col(j) = apply(e);
      e[j] = 0.0;
    }
    return dense;
  }

  const Eigen::SparseMatrix<double, Eigen::RowMajor> &matrix() const noexcept { return a_; }

private:
  void build() {
    std::vector<Eigen::Triplet<double>> entries;
    const double centre = (static_cast<double>(n_) - 1.0) / 2.0;
    for (std::size_t v = 0; v < views_; ++v) {
      const double theta = angle(v);
      const double c = std::cos(theta), s = std::sin(theta);
      const double reach = 0.5 * (std::abs(c) + std::abs(s));
      for (std::size_t r = 0; r < n_; ++r) {
        for (std::size_t q = 0; q < n_; ++q) {
          const double px = static_cast<double>(q) - centre;
          const double py = centre - static_cast<double>(r);
          const double proj = px * c + py * s;
          // Bins whose offset falls inside the pixel's footprint [proj - reach, proj + reach].
          const auto j_lo = static_cast<long long>(std::ceil(proj - reach + centre - 1e-9));
          const auto j_hi = static_cast<long long>(std::floor(proj + reach + centre + 1e-9));
          for (long long j = std::max(0LL, j_lo); j <= std::min<long long>(n_ - 1, j_hi); ++j) {
            const double offset = static_cast<double>(j) - centre;
            const double len = ray_pixel_chord(px, py, offset, theta);
            if (len > 1e-12)
              entries.emplace_back(static_cast<int>(v * n_ + j), static_cast<int>(r * n_ + q),
                                   len);
          }
        }
      }
    }
    a_.resize(rows(), cols());
    a_.setFromTriplets(entries.begin(), entries.end());
    a_.makeCompressed();
  }

  std::size_t n_;
  std::size_t views_;
  Eigen::SparseMatrix<double, Eigen::RowMajor> a_;
};

using TomographyModel = LinearGaussianModel<ParallelBeamProjector>;

/// Linear-Gaussian model with Lambda = I / sigma_y^2 over a projector; always
/// uses the matrix-free (CG + perturbation sampling) path.
inline TomographyModel make_tomography_model(ParallelBeamProjector projector,
                                             Eigen::VectorXd sinogram, double sigma_y) {
  if (!(sigma_y > 0.0))
    throw ParameterError("tomography model: sigma_y must be > 0");
  const Shape shape = projector.image_shape();
  return TomographyModel(std::move(projector), sigma_y, std::move(sinogram), shape,
                         SolverPolicy::iterative);
}

} // namespace gpnp
