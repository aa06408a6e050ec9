#pragma once

// Brute-force checks of the GPnP stationarity and reversibility results on
// discretized 1D state spaces.

#include "gpnp/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <vector>

namespace gpnp::oracle {

/// Uniform grid on [lo, hi] with trapezoidal quadrature weights.
class Grid1D {
public:
  static constexpr std::size_t kMinPoints = 256;

  Grid1D(double lo, double hi, std::size_t n) : lo_(lo), hi_(hi) {
    if (n < kMinPoints)
      throw ResolutionError("grid needs at least " + std::to_string(kMinPoints) + " points");
    if (!(hi > lo))
      throw ParameterError("grid bounds must satisfy lo < hi");
    h_ = (hi - lo) / static_cast<double>(n - 1);
    points_.resize(static_cast<Eigen::Index>(n));
    weights_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      points_[i] = lo + h_ * static_cast<double>(i);
      weights_[i] = (i == 0 || i + 1 == n) ? 0.5 * h_ : h_;
    }
  }

  /// Smallest grid on [lo, hi] that resolves a kernel of width gamma (h <= gamma / 8).
  static Grid1D resolving(double lo, double hi, double gamma, std::size_t min_points = 512) {
    const auto needed = static_cast<std::size_t>(std::ceil((hi - lo) / (gamma / 8.0))) + 1;
    return Grid1D(lo, hi, std::max(needed, min_points));
  }

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.size()); }
  double spacing() const noexcept { return h_; }
  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  const Eigen::VectorXd &points() const noexcept { return points_; }
  const Eigen::VectorXd &weights() const noexcept { return weights_; }
  double operator[](std::size_t i) const { return points_[static_cast<Eigen::Index>(i)]; }

  Eigen::VectorXd sample(const std::function<double(double)> &f) const {
    Eigen::VectorXd out(points_.size());
    for (Eigen::Index i = 0; i < points_.size(); ++i)
      out[i] = f(points_[i]);
    return out;
  }

  void require_resolves(double gamma) const {
    if (!(gamma > 0.0))
      throw ParameterError("gamma must be > 0");
    if (h_ > gamma / 8.0 * (1.0 + 1e-12))
      throw ResolutionError("grid spacing " + std::to_string(h_) + " does not resolve gamma " +
                            std::to_string(gamma) + " (need h <= gamma / 8)");
  }

private:
  double lo_, hi_, h_;
  Eigen::VectorXd points_;
  Eigen::VectorXd weights_;
};

/// Probability masses on grid nodes (density times trapezoid weight), summing to 1.
struct GridDistribution {
  Eigen::VectorXd mass;

  /// Masses proportional to exp(-energy) times the quadrature weights.
  static GridDistribution from_energy(const Grid1D &grid, const Eigen::VectorXd &energy) {
    const double emin = energy.minCoeff();
    GridDistribution d;
    d.mass = ((-(energy.array() - emin)).exp() * grid.weights().array()).matrix();
    d.normalize();
    return d;
  }

  void normalize() {
    const double total = mass.sum();
    if (!(total > 0.0) || !std::isfinite(total))
      throw ParameterError("grid distribution has no finite mass");
    mass /= total;
  }

  double mean(const Grid1D &grid) const { return mass.dot(grid.points()); }
  double variance(const Grid1D &grid) const {
    const double m = mean(grid);
    return mass.dot((grid.points().array() - m).square().matrix());
  }
};

inline double tv_distance(const Eigen::VectorXd &p, const Eigen::VectorXd &q) {
  return 0.5 * (p - q).cwiseAbs().sum();
}

inline double tv_distance(const GridDistribution &p, const GridDistribution &q) {
  return tv_distance(p.mass, q.mass);
}

/// Column-stochastic transition matrix: k(i, j) is the probability of moving
/// from grid node j to grid node i.
struct TransitionKernel {
  Eigen::MatrixXd k;

  double max_column_error() const {
    return (k.colwise().sum().array() - 1.0).abs().maxCoeff();
  }
};

/// -log( (exp(-u0) * g_{gamma^2})(x) ) on the grid, by trapezoidal quadrature
/// with a normalized Gaussian of variance gamma^2.
inline Eigen::VectorXd blurred_energy(const Grid1D &grid, const Eigen::VectorXd &u0, double gamma) {
  grid.require_resolves(gamma);
  const Eigen::Index n = grid.points().size();
  if (u0.size() != n)
    throw ParameterError("energy length does not match grid");
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * gamma * gamma);
  const double umin = u0.minCoeff();
  Eigen::VectorXd out(n);
  const auto &x = grid.points();
  const auto &w = grid.weights();
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double d = x[i] - x[k];
      acc += w[k] * std::exp(-(u0[k] - umin) - d * d / (2.0 * gamma * gamma));
    }
    out[i] = umin - std::log(norm * acc);
  }
  return out;
}

/// One proximal-distribution kernel: column j is q(. | x_j) proportional to
/// exp{-u(x_i) - (x_i - x_j)^2 / (2 gamma^2)} times the quadrature weight of node i.
inline TransitionKernel proximal_kernel(const Grid1D &grid, const Eigen::VectorXd &u, double gamma) {
  grid.require_resolves(gamma);
  const Eigen::Index n = grid.points().size();
  if (u.size() != n)
    throw ParameterError("energy length does not match grid");
  const auto &x = grid.points();
  const auto &w = grid.weights();
  TransitionKernel kern;
  kern.k.resize(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = x[i] - x[j];
      best = std::min(best, u[i] + d * d / (2.0 * gamma * gamma));
    }
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double d = x[i] - x[j];
      const double v = w[i] * std::exp(-(u[i] + d * d / (2.0 * gamma * gamma) - best));
      kern.k(i, j) = v;
      total += v;
    }
    kern.k.col(j) /= total;
  }
  return kern;
}

/// K = K1 K0: apply the u0 generator, then the u1 generator.
inline TransitionKernel build_composite_kernel(const Grid1D &grid, const Eigen::VectorXd &u0,
                                               const Eigen::VectorXd &u1, double gamma) {
  const TransitionKernel k0 = proximal_kernel(grid, u0, gamma);
  const TransitionKernel k1 = proximal_kernel(grid, u1, gamma);
  TransitionKernel k;
  k.k.noalias() = k1.k * k0.k;
  return k;
}

struct StationaryResult {
  GridDistribution distribution;
  std::size_t iterations = 0;
};

/// Power iteration by repeated squaring: K, K^2, K^4, ... until every column
/// of K^(2^m) lies within `tol` in total variation of their average, which
/// bounds the distance of K^(2^m) p0 to the stationary law for any start p0.
/// `iterations` counts kernel applications (2^m).
inline StationaryResult stationary_distribution(const TransitionKernel &kernel, double tol = 1e-12,
                                                std::size_t max_doublings = 60) {
  const Eigen::Index n = kernel.k.rows();
  if (kernel.k.cols() != n)
    throw ParameterError("transition kernel must be square");
  if (kernel.max_column_error() > 1e-6)
    throw ParameterError("transition kernel is not column-stochastic");
  Eigen::MatrixXd power = kernel.k;
  Eigen::MatrixXd next(n, n);
  std::size_t steps = 1;
  for (std::size_t m = 0; m <= max_doublings; ++m) {
    const Eigen::VectorXd avg = power.rowwise().mean();
    double spread = 0.0;
    for (Eigen::Index j = 0; j < n; ++j)
      spread = std::max(spread, tv_distance(power.col(j), avg));
    if (spread < tol) {
      GridDistribution d{avg};
      d.normalize();
      return {d, steps};
    }
    next.noalias() = power * power;
    for (Eigen::Index j = 0; j < n; ++j)
      next.col(j) /= next.col(j).sum();
    power.swap(next);
    steps *= 2;
  }
  throw IterationError("power iteration did not converge in 2^" + std::to_string(max_doublings) +
                       " steps");
}

/// max_{i,j} |p_j K_ij - p_i K_ji| relative to the largest flux p_j K_ij.
inline double detailed_balance_check(const TransitionKernel &kernel, const GridDistribution &p) {
  const Eigen::Index n = kernel.k.rows();
  if (kernel.k.cols() != n || p.mass.size() != n)
    throw ParameterError("kernel and distribution sizes disagree");
  const Eigen::MatrixXd flux = kernel.k * p.mass.asDiagonal();
  const double scale = flux.cwiseAbs().maxCoeff();
  if (scale == 0.0)
    return 0.0;
  return (flux - flux.transpose()).cwiseAbs().maxCoeff() / scale;
}

// ---------------------------------------------------------------------------
// Verification battery

struct ReportRow {
  std::string case_id;
  double gamma = 0.0;
  double tv = 0.0;
  double balance = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

inline void write_csv(std::ostream &os, const std::vector<ReportRow> &rows) {
  os << "case_id,gamma,tv_distance,detailed_balance_violation,tolerance,passed\n";
  os.precision(6);
  for (const auto &r : rows)
    os << r.case_id << ',' << r.gamma << ',' << std::scientific << r.tv << ',' << r.balance
       << ',' << r.tolerance << std::defaultfloat << ',' << (r.passed ? "true" : "false") << '\n';
}

/// Double-well prior energy (x^2 - 1)^2 / (2 * 0.3^2) and quadratic data
/// energy (x - 0.5)^2 / (2 * 0.5^2).
inline double double_well(double x) { return (x * x - 1.0) * (x * x - 1.0) / (2.0 * 0.09); }
inline double quadratic_data(double x) { return (x - 0.5) * (x - 0.5) / (2.0 * 0.25); }

struct BatteryOptions {
  std::vector<double> gammas{0.2, 0.1, 0.05};
  double lo = -2.0;
  double hi = 2.5;
  std::size_t min_points = 512;
  double tv_tolerance = 1e-3;
  double balance_tolerance = 1e-5;
};

struct BatteryCase {
  double gamma = 0.0;
  std::size_t grid_points = 0;
  double tv_to_prediction = 0.0;  ///< stationary vs exp{-u1 - blurred u0}
  double balance = 0.0;           ///< detailed-balance violation at the stationary law
  double tv_to_target = 0.0;      ///< stationary vs exp{-u1 - u0}
  double prior_only_balance = 0.0; ///< u1 = 0 chain
  std::size_t iterations = 0;
};

/// Runs one (double-well, quadratic, gamma) case on the grid resolving gamma.
inline BatteryCase run_battery_case(double gamma, const BatteryOptions &opt = {}) {
  const Grid1D grid = Grid1D::resolving(opt.lo, opt.hi, gamma, opt.min_points);
  const Eigen::VectorXd u0 = grid.sample(double_well);
  const Eigen::VectorXd u1 = grid.sample(quadratic_data);

  BatteryCase c;
  c.gamma = gamma;
  c.grid_points = grid.size();
  const TransitionKernel k = build_composite_kernel(grid, u0, u1, gamma);
  const StationaryResult st = stationary_distribution(k);
  c.iterations = st.iterations;
  const GridDistribution predicted =
      GridDistribution::from_energy(grid, u1 + blurred_energy(grid, u0, gamma));
  const GridDistribution target = GridDistribution::from_energy(grid, u0 + u1);
  c.tv_to_prediction = tv_distance(st.distribution, predicted);
  c.tv_to_target = tv_distance(st.distribution, target);
  c.balance = detailed_balance_check(k, st.distribution);

  const TransitionKernel k_prior =
      build_composite_kernel(grid, u0, Eigen::VectorXd::Zero(u0.size()), gamma);
  c.prior_only_balance =
      detailed_balance_check(k_prior, stationary_distribution(k_prior).distribution);
  return c;
}

inline std::vector<ReportRow> battery_rows(const std::vector<BatteryCase> &cases,
                                           const BatteryOptions &opt = {}) {
  std::vector<ReportRow> rows;
  for (const auto &c : cases) {
    const std::string g = std::to_string(c.gamma).substr(0, 4);
    rows.push_back({"stationary_vs_blurred_prediction_g" + g, c.gamma, c.tv_to_prediction,
                    c.balance, opt.tv_tolerance,
                    c.tv_to_prediction < opt.tv_tolerance && c.balance < opt.balance_tolerance});
    rows.push_back({"prior_only_reversibility_g" + g, c.gamma, 0.0, c.prior_only_balance,
                    opt.balance_tolerance, c.prior_only_balance < opt.balance_tolerance});
  }
  // Distance to the unblurred target must shrink as gamma decreases.
  std::vector<BatteryCase> sorted = cases;
  std::sort(sorted.begin(), sorted.end(),
            [](const auto &a, const auto &b) { return a.gamma > b.gamma; });
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const bool monotone = i == 0 || sorted[i].tv_to_target < sorted[i - 1].tv_to_target;
    rows.push_back({"gamma_sweep_tv_to_target", sorted[i].gamma, sorted[i].tv_to_target, 0.0,
                    0.0, monotone});
  }
  // Negative control: a cyclic shift is stationary for the uniform law but not reversible.
  {
    const Eigen::Index n = 256;
    TransitionKernel shift;
    shift.k = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j)
      shift.k((j + 1) % n, j) = 1.0;
    GridDistribution uniform{Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n))};
    const double v = detailed_balance_check(shift, uniform);
    rows.push_back({"negative_control_shift_kernel", 0.0, 0.0, v, 0.1, v > 0.1});
  }
  return rows;
}

inline std::vector<ReportRow> run_battery(const BatteryOptions &opt = {}) {
  std::vector<BatteryCase> cases;
  for (double g : opt.gammas)
    cases.push_back(run_battery_case(g, opt));
  return battery_rows(cases, opt);
}

} // namespace gpnp::oracle
