#pragma once

// Synthetic test images, masks and the zero-order fill baseline.

#include "gpnp/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

namespace gpnp::images {

/// Modified (high-contrast) Shepp-Logan head phantom on an n x n grid.
inline ImageTensor shepp_logan(std::size_t n) {
  struct Ellipse {
    double value, a, b, x0, y0, phi_deg;
  };
  static constexpr Ellipse kEllipses[] = {
      {1.0, 0.69, 0.92, 0.0, 0.0, 0.0},        {-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0},
      {-0.2, 0.11, 0.31, 0.22, 0.0, -18.0},    {-0.2, 0.16, 0.41, -0.22, 0.0, 18.0},
      {0.1, 0.21, 0.25, 0.0, 0.35, 0.0},       {0.1, 0.046, 0.046, 0.0, 0.1, 0.0},
      {0.1, 0.046, 0.046, 0.0, -0.1, 0.0},     {0.1, 0.046, 0.023, -0.08, -0.605, 0.0},
      {0.1, 0.023, 0.023, 0.0, -0.606, 0.0},   {0.1, 0.023, 0.046, 0.06, -0.605, 0.0},
  };
  ImageTensor img(Shape{n, n, 1});
  const double c = (static_cast<double>(n) - 1.0) / 2.0;
  const double half = static_cast<double>(n) / 2.0;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = 0; q < n; ++q) {
      const double x = (static_cast<double>(q) - c) / half;
      const double y = (c - static_cast<double>(r)) / half;
      double v = 0.0;
      for (const auto &e : kEllipses) {
        const double phi = e.phi_deg * std::numbers::pi / 180.0;
        const double xr = (x - e.x0) * std::cos(phi) + (y - e.y0) * std::sin(phi);
        const double yr = -(x - e.x0) * std::sin(phi) + (y - e.y0) * std::cos(phi);
        if ((xr / e.a) * (xr / e.a) + (yr / e.b) * (yr / e.b) <= 1.0)
          v += e.value;
      }
      img.at(r, q) = std::max(v, 0.0);
    }
  }
  return img;
}

/// Smoothly shaded background with a shaded disk and a shaded square; values in [0, 1].
inline ImageTensor shaded_shapes(std::size_t n) {
  ImageTensor img(Shape{n, n, 1});
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = 0; q < n; ++q) {
      const double y = static_cast<double>(r) / static_cast<double>(n);
      const double x = static_cast<double>(q) / static_cast<double>(n);
      double v = 0.45 + 0.15 * std::sin(two_pi * (2.0 * x + y)) +
                 0.1 * std::cos(two_pi * 3.0 * y) * std::sin(two_pi * x);
      if ((x - 0.3) * (x - 0.3) + (y - 0.35) * (y - 0.35) < 0.16 * 0.16)
        v = 0.85 - 0.3 * y;
      if (x > 0.6 && x < 0.85 && y > 0.6 && y < 0.85)
        v = 0.15 + 0.2 * x;
      img.at(r, q) = v;
    }
  }
  return img;
}

/// Gradient magnitude with central differences inside and one-sided
/// differences on the border (first channel).
inline std::vector<double> gradient_magnitude(const ImageTensor &img) {
  const std::size_t h = img.height(), w = img.width();
  std::vector<double> out(h * w);
  auto diff = [](double a, double b, double span) { return (a - b) / span; };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      double gy = 0.0, gx = 0.0;
      if (h > 1) {
        const std::size_t r0 = r == 0 ? 0 : r - 1, r1 = r + 1 == h ? r : r + 1;
        gy = diff(img.at(r1, q), img.at(r0, q), static_cast<double>(r1 - r0));
      }
      if (w > 1) {
        const std::size_t q0 = q == 0 ? 0 : q - 1, q1 = q + 1 == w ? q : q + 1;
        gx = diff(img.at(r, q1), img.at(r, q0), static_cast<double>(q1 - q0));
      }
      out[r * w + q] = std::hypot(gx, gy);
    }
  }
  return out;
}

/// Pixels whose gradient magnitude exceeds `threshold`.
inline std::vector<bool> edge_mask(const ImageTensor &img, double threshold = 0.1) {
  const auto g = gradient_magnitude(img);
  std::vector<bool> mask(g.size());
  for (std::size_t i = 0; i < g.size(); ++i)
    mask[i] = g[i] > threshold;
  return mask;
}

struct MaskedMeans {
  double inside = 0.0;
  double outside = 0.0;
};

/// Means of a single-channel image over a mask and its complement.
inline MaskedMeans masked_means(const ImageTensor &img, const std::vector<bool> &mask) {
  double si = 0.0, so = 0.0;
  std::size_t ni = 0, no = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i]) {
      si += img[i];
      ++ni;
    } else {
      so += img[i];
      ++no;
    }
  }
  return {ni ? si / static_cast<double>(ni) : 0.0, no ? so / static_cast<double>(no) : 0.0};
}

/// Zero-order (nearest-sample) fill. `pixels` are row-major pixel indices of
/// a single-channel image; ties go to the first sample in `pixels`.
inline ImageTensor nearest_fill(Shape shape, const std::vector<std::size_t> &pixels,
                                const std::vector<double> &values) {
  if (pixels.empty())
    throw ParameterError("nearest_fill: no samples");
  ImageTensor out(shape);
  const std::size_t w = shape.width;
  for (std::size_t r = 0; r < shape.height; ++r) {
    for (std::size_t q = 0; q < w; ++q) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = 0;
      for (std::size_t k = 0; k < pixels.size(); ++k) {
        const double dr = static_cast<double>(pixels[k] / w) - static_cast<double>(r);
        const double dq = static_cast<double>(pixels[k] % w) - static_cast<double>(q);
        const double d = dr * dr + dq * dq;
        if (d < best) {
          best = d;
          arg = k;
        }
      }
      for (std::size_t c = 0; c < shape.channels; ++c)
        out.at(r, q, c) = values[arg * shape.channels + c];
    }
  }
  return out;
}

inline double rmse(const ImageTensor &a, const ImageTensor &b) {
  require_same_shape(a, b, "rmse");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

} // namespace gpnp::images
