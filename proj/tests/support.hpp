#pragma once

// Independent reference computations shared by the unit tests and the acceptance suite.

#include "gpnp/core.hpp"
#include "gpnp/forward.hpp"
#include "gpnp/prior.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>

namespace support {

/// Golden-section search for the minimizer of a unimodal f on [lo, hi].
inline double golden_min(const std::function<double(double)> &f, double lo, double hi,
                         double tol = 1e-13) {
  const double r = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Objective 1/2 |y - A x|^2_Lambda + |x - v|^2 / (2 gamma^2) with diagonal Lambda.
struct ProxObjective {
  Eigen::MatrixXd a;
  Eigen::VectorXd lambda;
  Eigen::VectorXd y;
  Eigen::VectorXd v;
  double gamma;

  double operator()(const Eigen::VectorXd &x) const {
    const Eigen::VectorXd r = y - a * x;
    return 0.5 * r.dot(lambda.cwiseProduct(r)) + (x - v).squaredNorm() / (2.0 * gamma * gamma);
  }
  Eigen::VectorXd gradient(const Eigen::VectorXd &x) const {
    return -a.transpose() * lambda.cwiseProduct(y - a * x) + (x - v) / (gamma * gamma);
  }
};

inline double a_bound(const ProxObjective &f) {
  return f.a.squaredNorm() * f.lambda.maxCoeff() + 1.0 / (f.gamma * f.gamma);
}

/// Fixed-step gradient descent with the step set from a Frobenius-norm
/// Lipschitz bound. Slow but free of any linear solve.
inline Eigen::VectorXd gradient_descent(const ProxObjective &f, double grad_tol = 1e-12,
                                        long max_iter = 20'000'000) {
  const double lip = a_bound(f);
  Eigen::VectorXd x = f.v;
  for (long it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd g = f.gradient(x);
    if (g.norm() <= grad_tol * lip)
      return x;
    x -= g / lip;
  }
  throw std::runtime_error("gradient_descent: no convergence");
}

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64 &eng,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      m(i, j) = n(eng);
  return m;
}

inline Eigen::VectorXd random_vector(Eigen::Index n, std::mt19937_64 &eng, double lo = -1.0,
                                     double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i)
    v[i] = u(eng);
  return v;
}

/// Running first and second moments of vector draws.
struct Moments {
  explicit Moments(Eigen::Index p)
      : sum(Eigen::VectorXd::Zero(p)), outer(Eigen::MatrixXd::Zero(p, p)) {}
  void add(const Eigen::VectorXd &x) {
    sum += x;
    outer.noalias() += x * x.transpose();
    ++n;
  }
  Eigen::VectorXd mean() const { return sum / static_cast<double>(n); }
  Eigen::MatrixXd covariance() const {
    const Eigen::VectorXd m = mean();
    return outer / static_cast<double>(n) - m * m.transpose();
  }
  Eigen::VectorXd sum;
  Eigen::MatrixXd outer;
  long n = 0;
};

/// Standard error of a sample covariance entry for Gaussian data.
inline double cov_standard_error(const Eigen::MatrixXd &r, Eigen::Index i, Eigen::Index j,
                                 long n) {
  return std::sqrt((r(i, i) * r(j, j) + r(i, j) * r(i, j)) / static_cast<double>(n));
}

inline gpnp::Shape column_shape(Eigen::Index p) {
  return gpnp::Shape{static_cast<std::size_t>(p), 1, 1};
}

// Small all-Gaussian problem with a closed-form posterior.
struct GaussianProblem {
  double mu0 = 0.3, tau = 0.5, sigma_y = 0.2;
  Eigen::MatrixXd a;
  Eigen::VectorXd y;
  Eigen::VectorXd post_mean;
  Eigen::MatrixXd post_cov;

  explicit GaussianProblem(std::uint64_t seed) {
    std::mt19937_64 eng(seed);
    a = random_matrix(4, 4, eng);
    const Eigen::VectorXd truth = random_vector(4, eng, 0.0, 1.0);
    y = a * truth + sigma_y * random_matrix(4, 1, eng);
    const double lam = 1.0 / (sigma_y * sigma_y);
    Eigen::MatrixXd h = lam * a.transpose() * a;
    h.diagonal().array() += 1.0 / (tau * tau);
    post_cov = h.inverse();
    post_mean =
        post_cov * (lam * a.transpose() * y + Eigen::VectorXd::Constant(4, mu0 / (tau * tau)));
  }

  // Exact covariance of the final GPnP state for this all-Gaussian chain.
  Eigen::MatrixXd chain_covariance(const gpnp::GPnPParams &p) const {
    const double lam = 1.0 / (sigma_y * sigma_y);
    Eigen::MatrixXd c = p.sigma_max * p.sigma_max * Eigen::MatrixXd::Identity(4, 4);
    for (double s : gpnp::geometric_schedule(p).values) {
      const double gamma = std::sqrt(p.beta) * s;
      const double k = tau * tau / (tau * tau + p.alpha * p.alpha * s * s);
      const double lin = 1.0 - p.beta + p.beta * k;
      c = lin * lin * c + p.beta * s * s * Eigen::MatrixXd::Identity(4, 4);
      Eigen::MatrixXd h = lam * a.transpose() * a;
      h.diagonal().array() += 1.0 / (gamma * gamma);
      const Eigen::MatrixXd r = h.inverse();
      c = (r / (gamma * gamma)) * c * (r / (gamma * gamma)).transpose() + r;
    }
    return c;
  }
  // Exact mean of the final GPnP state, started from the 0.5 initialization.
  Eigen::VectorXd chain_mean(const gpnp::GPnPParams &p) const {
    const double lam = 1.0 / (sigma_y * sigma_y);
    Eigen::VectorXd m = Eigen::VectorXd::Constant(4, 0.5);
    for (double s : gpnp::geometric_schedule(p).values) {
      const double gamma = std::sqrt(p.beta) * s;
      const double k = tau * tau / (tau * tau + p.alpha * p.alpha * s * s);
      m = (1.0 - p.beta + p.beta * k) * m + Eigen::VectorXd::Constant(4, p.beta * (1.0 - k) * mu0);
      Eigen::MatrixXd h = lam * a.transpose() * a;
      h.diagonal().array() += 1.0 / (gamma * gamma);
      const Eigen::MatrixXd r = h.inverse();
      m = r / (gamma * gamma) * m + r * (lam * a.transpose() * y);
    }
    return m;
  }

  gpnp::LinearGaussianModel<gpnp::DenseOperator> model() const {
    return {gpnp::DenseOperator(a), sigma_y, y, column_shape(4)};
  }
  gpnp::GaussianConjugateDenoiser denoiser() const { return {mu0, tau}; }
};

} // namespace support
