#pragma once

#include "gpnp/core.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <limits>
#include <memory>
#include <vector>

namespace gpnp {

/// Forward-model contract: data energy u1, its proximal map
///   argmin_x u1(x) + |x - v|^2 / (2 gamma^2),
/// and a proximal generator drawing from exp{-u1(x) - |x - v|^2 / (2 gamma^2)}.
template <class M>
concept ForwardModel = requires(const M &m, const ImageTensor &x, double gamma, RandomSource &rng) {
  { m.energy(x) } -> std::convertible_to<double>;
  { m.prox(x, gamma) } -> std::convertible_to<ImageTensor>;
  { m.generate(x, gamma, rng) } -> std::convertible_to<ImageTensor>;
};

inline void require_positive_gamma(double gamma, const char *who) {
  if (!(gamma > 0.0) || !std::isfinite(gamma))
    throw ParameterError(std::string(who) + ": gamma must be > 0");
}

/// u1 = 0: prox is the identity and the generator adds gamma W.
struct NullForwardModel {
  double energy(const ImageTensor &) const { return 0.0; }
  ImageTensor prox(const ImageTensor &v, double gamma) const {
    require_positive_gamma(gamma, "null model");
    return v;
  }
  ImageTensor generate(const ImageTensor &v, double gamma, RandomSource &rng) const {
    require_positive_gamma(gamma, "null model");
    ImageTensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i)
      out[i] = v[i] + gamma * rng.normal();
    return out;
  }
};

// ---------------------------------------------------------------------------
// Linear operators and conjugate gradients

template <class Op>
concept LinearOperator = requires(const Op &op, const Eigen::VectorXd &x) {
  { op.rows() } -> std::convertible_to<Eigen::Index>;
  { op.cols() } -> std::convertible_to<Eigen::Index>;
  { op.apply(x) } -> std::convertible_to<Eigen::VectorXd>;
  { op.adjoint(x) } -> std::convertible_to<Eigen::VectorXd>;
};

class DenseOperator {
public:
  explicit DenseOperator(Eigen::MatrixXd a) : a_(std::move(a)) {}
  Eigen::Index rows() const { return a_.rows(); }
  Eigen::Index cols() const { return a_.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd &x) const { return a_ * x; }
  Eigen::VectorXd adjoint(const Eigen::VectorXd &z) const { return a_.transpose() * z; }
  const Eigen::MatrixXd &matrix() const noexcept { return a_; }

private:
  Eigen::MatrixXd a_;
};

class SparseOperator {
public:
  using Matrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
  explicit SparseOperator(Matrix a) : a_(std::move(a)) { a_.makeCompressed(); }
  Eigen::Index rows() const { return a_.rows(); }
  Eigen::Index cols() const { return a_.cols(); }
  Eigen::VectorXd apply(const Eigen::VectorXd &x) const { return a_ * x; }
  Eigen::VectorXd adjoint(const Eigen::VectorXd &z) const { return a_.transpose() * z; }
  const Matrix &matrix() const noexcept { return a_; }

private:
  Matrix a_;
};

struct CgResult {
  Eigen::VectorXd x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
};

/// Conjugate gradients for a symmetric positive-definite operator. Stops when
/// |b - H x| <= tol |b|; throws SolverError (with the final residual) when
/// `max_iter` is exhausted.
template <class Apply>
CgResult conjugate_gradient(const Apply &apply_h, const Eigen::VectorXd &b, Eigen::VectorXd x0,
                            double tol, std::size_t max_iter) {
  CgResult res;
  res.x = std::move(x0);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x.setZero();
    return res;
  }
  Eigen::VectorXd r = b - apply_h(res.x);
  Eigen::VectorXd p = r;
  double rr = r.squaredNorm();
  const double target = tol * bnorm;
  while (std::sqrt(rr) > target) {
    if (res.iterations >= max_iter)
      throw SolverError("conjugate gradient did not converge in " + std::to_string(max_iter) +
                            " iterations (relative residual " +
                            std::to_string(std::sqrt(rr) / bnorm) + ")",
                        std::sqrt(rr) / bnorm);
    const Eigen::VectorXd hp = apply_h(p);
    const double php = p.dot(hp);
    if (!(php > 0.0))
      throw SolverError("conjugate gradient: operator is not positive definite",
                        std::sqrt(rr) / bnorm);
    const double step = rr / php;
    res.x.noalias() += step * p;
    r.noalias() -= step * hp;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++res.iterations;
  }
  res.relative_residual = std::sqrt(rr) / bnorm;
  return res;
}

enum class SolverPolicy {
  automatic, ///< direct for dense operators with p <= 4096, CG otherwise
  direct,
  iterative,
};

/// Linear-Gaussian data model y = A x + noise, noise ~ N(0, Lambda^{-1}),
/// Lambda diagonal. Energy u1(x) = 1/2 |y - A x|^2_Lambda.
template <LinearOperator Op>
class LinearGaussianModel {
public:
  static constexpr double kCgTolerance = 1e-10;
  static constexpr Eigen::Index kDirectLimit = 4096;

  LinearGaussianModel(Op op, Eigen::VectorXd precision, Eigen::VectorXd y, Shape shape,
                      SolverPolicy policy = SolverPolicy::automatic)
      : op_(std::move(op)), precision_(std::move(precision)), y_(std::move(y)), shape_(shape),
        policy_(policy) {
    validate();
  }

  /// Scalar precision 1 / sigma_y^2 on every measurement.
  LinearGaussianModel(Op op, double sigma_y, Eigen::VectorXd y, Shape shape,
                      SolverPolicy policy = SolverPolicy::automatic)
      : op_(std::move(op)), y_(std::move(y)), shape_(shape), policy_(policy) {
    if (!(sigma_y > 0.0) || !std::isfinite(sigma_y))
      throw ParameterError("linear model: sigma_y must be positive and finite");
    precision_ = Eigen::VectorXd::Constant(y_.size(), 1.0 / (sigma_y * sigma_y));
    validate();
  }

  const Op &op() const noexcept { return op_; }
  const Eigen::VectorXd &precision() const noexcept { return precision_; }
  const Eigen::VectorXd &data() const noexcept { return y_; }
  const Shape &shape() const noexcept { return shape_; }

  double energy(const ImageTensor &x) const {
    check(x);
    const Eigen::VectorXd r = y_ - op_.apply(x.vec());
    return 0.5 * r.dot(precision_.cwiseProduct(r));
  }

  /// v + (A^T Lambda A + I / gamma^2)^{-1} A^T Lambda (y - A v)
  ImageTensor prox(const ImageTensor &v, double gamma) const {
    check(v);
    require_positive_gamma(gamma, "linear prox");
    const Eigen::VectorXd vv = v.vec();
    const Eigen::VectorXd rhs = op_.adjoint(precision_.cwiseProduct(y_ - op_.apply(vv)));
    Eigen::VectorXd delta;
    if (use_direct()) {
      const auto llt = factor(gamma);
      delta = llt.solve(rhs);
    } else {
      delta = cg(gamma, rhs, Eigen::VectorXd::Zero(vv.size())).x;
    }
    return ImageTensor::from_vector(shape_, vv + delta);
  }

  /// Exact draw from N(prox(v, gamma), R), R = (A^T Lambda A + I / gamma^2)^{-1}.
  ///
  /// Dense path: p draws z, returns mean + L^{-T} z with L L^T = R^{-1}.
  /// Operator path (perturbation sampling): m draws for eta ~ N(0, Lambda^{-1}),
  /// then p draws w, and solves R^{-1} x = A^T Lambda (y + eta) + (v + gamma w) / gamma^2.
  ImageTensor generate(const ImageTensor &v, double gamma, RandomSource &rng) const {
    check(v);
    require_positive_gamma(gamma, "linear generate");
    const Eigen::VectorXd vv = v.vec();
    const double inv_g2 = 1.0 / (gamma * gamma);
    if (use_direct()) {
      const auto llt = factor(gamma);
      const Eigen::VectorXd rhs = op_.adjoint(precision_.cwiseProduct(y_ - op_.apply(vv)));
      const Eigen::VectorXd mean = vv + llt.solve(rhs);
      const Eigen::VectorXd z = rng.normal_vector(vv.size());
      const Eigen::VectorXd noise = llt.matrixU().solve(z);
      return ImageTensor::from_vector(shape_, mean + noise);
    }
    Eigen::VectorXd eta(y_.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i)
      eta[i] = rng.normal() / std::sqrt(precision_[i]);
    const Eigen::VectorXd w = rng.normal_vector(vv.size());
    const Eigen::VectorXd rhs =
        op_.adjoint(precision_.cwiseProduct(y_ + eta)) + inv_g2 * (vv + gamma * w);
    return ImageTensor::from_vector(shape_, cg(gamma, rhs, vv).x);
  }

  /// Dense R = (A^T Lambda A + I / gamma^2)^{-1}; only for dense operators.
  Eigen::MatrixXd conditional_covariance(double gamma) const {
    require_positive_gamma(gamma, "conditional covariance");
    const auto llt = factor(gamma);
    return llt.solve(Eigen::MatrixXd::Identity(op_.cols(), op_.cols()));
  }

private:
  void validate() const {
    if (static_cast<std::size_t>(op_.cols()) != shape_.size())
      throw GeometryError("linear model: operator has " + std::to_string(op_.cols()) +
                          " columns but image shape " + to_string(shape_) + " has " +
                          std::to_string(shape_.size()) + " entries");
    if (precision_.size() != op_.rows() || y_.size() != op_.rows())
      throw GeometryError("linear model: precision and data must have one entry per row");
    for (Eigen::Index i = 0; i < precision_.size(); ++i)
      if (!(precision_[i] > 0.0) || !std::isfinite(precision_[i]))
        throw ParameterError("linear model: precision must be positive and finite");
    if (policy_ == SolverPolicy::direct && !has_dense())
      throw ParameterError("linear model: direct solves need a dense operator");
  }

  bool has_dense() const { return std::same_as<Op, DenseOperator>; }

  bool use_direct() const {
    switch (policy_) {
    case SolverPolicy::direct:
      return true;
    case SolverPolicy::iterative:
      return false;
    case SolverPolicy::automatic:
      break;
    }
    return has_dense() && op_.cols() <= kDirectLimit;
  }

  Eigen::LLT<Eigen::MatrixXd> factor(double gamma) const {
    if constexpr (std::same_as<Op, DenseOperator>) {
      const Eigen::MatrixXd &a = op_.matrix();
      Eigen::MatrixXd h = a.transpose() * precision_.asDiagonal() * a;
      h.diagonal().array() += 1.0 / (gamma * gamma);
      Eigen::LLT<Eigen::MatrixXd> llt(h);
      if (llt.info() != Eigen::Success)
        throw SolverError("linear model: Cholesky factorization failed");
      return llt;
    } else {
      throw ParameterError("linear model: dense factorization needs a dense operator");
    }
  }

  CgResult cg(double gamma, const Eigen::VectorXd &rhs, Eigen::VectorXd x0) const {
    const double inv_g2 = 1.0 / (gamma * gamma);
    auto apply_h = [&](const Eigen::VectorXd &x) -> Eigen::VectorXd {
      return op_.adjoint(precision_.cwiseProduct(op_.apply(x))) + inv_g2 * x;
    };
    return conjugate_gradient(apply_h, rhs, std::move(x0), kCgTolerance,
                              10 * static_cast<std::size_t>(op_.cols()));
  }

  void check(const ImageTensor &x) const {
    if (x.shape() != shape_)
      throw GeometryError("linear model: expected shape " + to_string(shape_) + ", got " +
                          to_string(x.shape()));
  }

  Op op_;
  Eigen::VectorXd precision_;
  Eigen::VectorXd y_;
  Shape shape_;
  SolverPolicy policy_;
};

// ---------------------------------------------------------------------------

/// Noisy samples y_s = x_s + N(0, sigma_y^2) at a set of storage indices.
class SubsamplingModel {
public:
  SubsamplingModel(Shape shape, std::vector<std::size_t> indices, std::vector<double> y,
                   double sigma_y)
      : shape_(shape), indices_(std::move(indices)), y_(std::move(y)), sigma_y_(sigma_y),
        slot_(shape.size(), kUnsampled) {
    if (indices_.size() != y_.size())
      throw GeometryError("subsampling model: need one measurement per sample index");
    if (!(sigma_y >= 0.0) || !std::isfinite(sigma_y))
      throw ParameterError("subsampling model: sigma_y must be >= 0");
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      const std::size_t s = indices_[k];
      if (s >= shape_.size())
        throw GeometryError("subsampling model: sample index " + std::to_string(s) +
                            " out of bounds");
      if (slot_[s] != kUnsampled)
        throw GeometryError("subsampling model: duplicate sample index " + std::to_string(s));
      slot_[s] = k;
    }
  }

  const Shape &shape() const noexcept { return shape_; }
  const std::vector<std::size_t> &indices() const noexcept { return indices_; }
  const std::vector<double> &measurements() const noexcept { return y_; }
  double sigma_y() const noexcept { return sigma_y_; }
  bool sampled(std::size_t s) const { return slot_[s] != kUnsampled; }

  double energy(const ImageTensor &x) const {
    check(x);
    double e = 0.0;
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      const double r = y_[k] - x[indices_[k]];
      if (sigma_y_ == 0.0) {
        if (r != 0.0)
          return std::numeric_limits<double>::infinity();
      } else {
        e += r * r / (2.0 * sigma_y_ * sigma_y_);
      }
    }
    return e;
  }

  ImageTensor prox(const ImageTensor &v, double gamma) const {
    check(v);
    require_positive_gamma(gamma, "subsample prox");
    const double g2 = gamma * gamma;
    const double gain = g2 / (sigma_y_ * sigma_y_ + g2);
    ImageTensor out = v;
    for (std::size_t k = 0; k < indices_.size(); ++k) {
      const std::size_t s = indices_[k];
      out[s] = gain == 1.0 ? y_[k] : v[s] + gain * (y_[k] - v[s]);
    }
    return out;
  }

  /// prox plus N(0, sigma_y^2 gamma^2 / (sigma_y^2 + gamma^2)) on samples and
  /// N(0, gamma^2) elsewhere; one draw per entry in storage order.
  ImageTensor generate(const ImageTensor &v, double gamma, RandomSource &rng) const {
    ImageTensor out = prox(v, gamma);
    const double g2 = gamma * gamma;
    const double s2 = sigma_y_ * sigma_y_;
    const double on = std::sqrt(s2 * g2 / (s2 + g2));
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += (slot_[i] != kUnsampled ? on : gamma) * rng.normal();
    return out;
  }

private:
  static constexpr std::size_t kUnsampled = std::numeric_limits<std::size_t>::max();

  void check(const ImageTensor &x) const {
    if (x.shape() != shape_)
      throw GeometryError("subsampling model: expected shape " + to_string(shape_) + ", got " +
                          to_string(x.shape()));
  }

  Shape shape_;
  std::vector<std::size_t> indices_;
  std::vector<double> y_;
  double sigma_y_;
  std::vector<std::size_t> slot_;
};

/// Generic twice-differentiable energy. The proximal map is found by
/// backtracking gradient descent on u1(x) + |x - v|^2 / (2 gamma^2); the
/// generator is the small-gamma approximation prox + gamma W.
class SmoothForwardModel {
public:
  using Energy = std::function<double(const Eigen::VectorXd &)>;
  using Gradient = std::function<Eigen::VectorXd(const Eigen::VectorXd &)>;

  SmoothForwardModel(Shape shape, Energy energy, Gradient gradient, double tolerance = 1e-12)
      : shape_(shape), energy_(std::move(energy)), gradient_(std::move(gradient)),
        tol_(tolerance) {}

  double energy(const ImageTensor &x) const { return energy_(x.vec()); }

  ImageTensor prox(const ImageTensor &v, double gamma) const {
    require_positive_gamma(gamma, "smooth prox");
    if (v.shape() != shape_)
      throw GeometryError("smooth model: shape mismatch");
    const double inv_g2 = 1.0 / (gamma * gamma);
    const Eigen::VectorXd vv = v.vec();
    auto objective = [&](const Eigen::VectorXd &x) {
      return energy_(x) + 0.5 * inv_g2 * (x - vv).squaredNorm();
    };
    Eigen::VectorXd x = vv;
    double fx = objective(x);
    double step = gamma * gamma;
    for (int it = 0; it < 100000; ++it) {
      const Eigen::VectorXd g = gradient_(x) + inv_g2 * (x - vv);
      if (g.norm() <= tol_ * inv_g2 * (1.0 + x.norm()))
        return ImageTensor::from_vector(shape_, x);
      step *= 2.0;
      for (;;) {
        Eigen::VectorXd cand = x - step * g;
        const double fc = objective(cand);
        if (fc <= fx - 0.5 * step * g.squaredNorm()) {
          x = std::move(cand);
          fx = fc;
          break;
        }
        step *= 0.5;
        if (step < 1e-300)
          return ImageTensor::from_vector(shape_, x);
      }
    }
    throw SolverError("smooth prox: gradient descent did not converge");
  }

  ImageTensor generate(const ImageTensor &v, double gamma, RandomSource &rng) const {
    ImageTensor out = prox(v, gamma);
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] += gamma * rng.normal();
    return out;
  }

private:
  Shape shape_;
  Energy energy_;
  Gradient gradient_;
  double tol_;
};

/// Type-erased forward model for run-time selection.
class AnyForwardModel {
public:
  template <ForwardModel M>
    requires(!std::same_as<std::remove_cvref_t<M>, AnyForwardModel>)
  AnyForwardModel(M m) : impl_(std::make_shared<Model<M>>(std::move(m))) {}

  double energy(const ImageTensor &x) const { return impl_->energy(x); }
  ImageTensor prox(const ImageTensor &v, double gamma) const { return impl_->prox(v, gamma); }
  ImageTensor generate(const ImageTensor &v, double gamma, RandomSource &rng) const {
    return impl_->generate(v, gamma, rng);
  }

private:
  struct Concept {
    virtual ~Concept() = default;
    virtual double energy(const ImageTensor &) const = 0;
    virtual ImageTensor prox(const ImageTensor &, double) const = 0;
    virtual ImageTensor generate(const ImageTensor &, double, RandomSource &) const = 0;
  };
  template <class M> struct Model final : Concept {
    explicit Model(M m) : m(std::move(m)) {}
    double energy(const ImageTensor &x) const override { return m.energy(x); }
    ImageTensor prox(const ImageTensor &v, double g) const override { return m.prox(v, g); }
    ImageTensor generate(const ImageTensor &v, double g, RandomSource &r) const override {
      return m.generate(v, g, r);
    }
    M m;
  };
  std::shared_ptr<const Concept> impl_;
};

} // namespace gpnp
