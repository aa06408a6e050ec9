#include "gpnp/forward.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace gpnp;

namespace {

using DenseModel = LinearGaussianModel<DenseOperator>;

ImageTensor column(const Eigen::VectorXd &v) {
  return ImageTensor::from_vector(Shape{static_cast<std::size_t>(v.size()), 1, 1}, v);
}

Shape column_shape(Eigen::Index p) { return Shape{static_cast<std::size_t>(p), 1, 1}; }

struct RandomDense {
  Eigen::MatrixXd a;
  Eigen::VectorXd lambda, y, v;
  double gamma;
};

RandomDense random_dense(std::mt19937_64 &eng, Eigen::Index m, Eigen::Index p) {
  std::uniform_real_distribution<double> lam(0.5, 20.0), gam(0.05, 1.0);
  RandomDense r;
  r.a = support::random_matrix(m, p, eng);
  r.lambda = Eigen::VectorXd(m);
  for (Eigen::Index i = 0; i < m; ++i)
    r.lambda[i] = lam(eng);
  r.y = support::random_vector(m, eng);
  r.v = support::random_vector(p, eng);
  r.gamma = gam(eng);
  return r;
}

} // namespace

TEST(LinearProx, ScalarCase) {
  const DenseModel m(DenseOperator(Eigen::MatrixXd::Ones(1, 1)), 0.1, Eigen::VectorXd::Ones(1),
                     column_shape(1));
  const double out = m.prox(column(Eigen::VectorXd::Constant(1, 0.2)), 0.1)[0];
  const double ref = support::golden_min(
      [](double x) { return (1.0 - x) * (1.0 - x) / (2 * 0.01) + (x - 0.2) * (x - 0.2) / (2 * 0.01); },
      -2.0, 2.0);
  EXPECT_NEAR(out, ref, 1e-7);
  EXPECT_NEAR(out, 0.6, 1e-12);
}

TEST(LinearProx, ConsistentDataReturnsInput) {
  std::mt19937_64 eng(1);
  const Eigen::MatrixXd a = support::random_matrix(5, 6, eng);
  const Eigen::VectorXd v = support::random_vector(6, eng);
  for (auto policy : {SolverPolicy::direct, SolverPolicy::iterative}) {
    const DenseModel m(DenseOperator(a), 0.05, a * v, column_shape(6), policy);
    const auto out = m.prox(column(v), 0.3);
    for (Eigen::Index i = 0; i < 6; ++i)
      EXPECT_NEAR(out[i], v[i], 1e-12);
  }
}

TEST(LinearProx, MatchesGradientDescentOnRandomDense) {
  std::mt19937_64 eng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const auto r = random_dense(eng, 8, 8);
    const DenseModel m(DenseOperator(r.a), r.lambda, r.y, column_shape(8));
    const auto out = m.prox(column(r.v), r.gamma);
    const auto ref = support::gradient_descent({r.a, r.lambda, r.y, r.v, r.gamma});
    for (Eigen::Index i = 0; i < 8; ++i)
      EXPECT_NEAR(out[i], ref[i], 1e-6);
  }
}

TEST(LinearProx, DirectAndIterativePathsAgree) {
  std::mt19937_64 eng(3);
  const auto r = random_dense(eng, 6, 10);
  const DenseModel direct(DenseOperator(r.a), r.lambda, r.y, column_shape(10), SolverPolicy::direct);
  const DenseModel iter(DenseOperator(r.a), r.lambda, r.y, column_shape(10),
                        SolverPolicy::iterative);
  const auto a = direct.prox(column(r.v), r.gamma), b = iter.prox(column(r.v), r.gamma);
  for (Eigen::Index i = 0; i < 10; ++i)
    EXPECT_NEAR(a[i], b[i], 1e-9);
}

TEST(LinearProx, RejectsBadInputs) {
  const DenseModel m(DenseOperator(Eigen::MatrixXd::Identity(2, 2)), 0.1, Eigen::VectorXd::Zero(2),
                     column_shape(2));
  EXPECT_THROW(m.prox(column(Eigen::VectorXd::Zero(2)), 0.0), ParameterError);
  EXPECT_THROW(m.prox(column(Eigen::VectorXd::Zero(3)), 0.1), GeometryError);
  EXPECT_THROW(DenseModel(DenseOperator(Eigen::MatrixXd::Identity(2, 2)), Eigen::VectorXd::Zero(2),
                          Eigen::VectorXd::Zero(2), column_shape(2)),
               ParameterError);
  EXPECT_THROW(DenseModel(DenseOperator(Eigen::MatrixXd::Identity(2, 3)), 0.1,
                          Eigen::VectorXd::Zero(2), column_shape(2)),
               GeometryError);
}

TEST(LinearGenerate, LargeGammaVarianceApproachesDataNoise) {
  const double sigma_y = 0.1, gamma = 1e3;
  const DenseModel m(DenseOperator(Eigen::MatrixXd::Identity(3, 3)), sigma_y,
                     Eigen::VectorXd::Zero(3), column_shape(3));
  const double expected = 1.0 / (1.0 / (sigma_y * sigma_y) + 1.0 / (gamma * gamma));
  const Eigen::MatrixXd r = m.conditional_covariance(gamma);
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(r(i, i), expected, 1e-15);
  EXPECT_NEAR(expected, sigma_y * sigma_y, 1e-9);

  RandomSource rng(4);
  support::Moments mom(3);
  const int n = 20000;
  for (int k = 0; k < n; ++k)
    mom.add(m.generate(column(Eigen::VectorXd::Constant(3, 0.7)), gamma, rng).vec());
  for (int i = 0; i < 3; ++i)
    EXPECT_NEAR(mom.covariance()(i, i), expected, 5.0 * expected * std::sqrt(2.0 / n));
}

TEST(LinearGenerate, HugePrecisionPinsDrawsToData) {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
  for (auto policy : {SolverPolicy::direct, SolverPolicy::iterative}) {
    const DenseModel m(DenseOperator(Eigen::MatrixXd::Identity(4, 4)), Eigen::VectorXd::Constant(4, 1e8),
                       y, column_shape(4), policy);
    RandomSource rng(5);
    for (int k = 0; k < 20; ++k) {
      const auto out = m.generate(column(Eigen::VectorXd::Constant(4, 5.0)), 0.5, rng);
      for (int i = 0; i < 4; ++i)
        EXPECT_NEAR(out[i], y[i], 1e-3);
    }
  }
}

TEST(LinearGenerate, DenseCovarianceMatchesInverseHessian) {
  std::mt19937_64 eng(6);
  const auto r = random_dense(eng, 3, 4);
  const DenseModel m(DenseOperator(r.a), r.lambda, r.y, column_shape(4));
  Eigen::MatrixXd h = r.a.transpose() * r.lambda.asDiagonal() * r.a;
  h.diagonal().array() += 1.0 / (r.gamma * r.gamma);
  const Eigen::MatrixXd cov = h.inverse();
  const Eigen::VectorXd mean = m.prox(column(r.v), r.gamma).vec();

  RandomSource rng(7);
  const long n = 50000;
  support::Moments mom(4);
  for (long k = 0; k < n; ++k)
    mom.add(m.generate(column(r.v), r.gamma, rng).vec());
  const Eigen::MatrixXd emp = mom.covariance();
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(mom.mean()[i], mean[i], 5.0 * std::sqrt(cov(i, i) / n));
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(emp(i, j), cov(i, j), 5.0 * support::cov_standard_error(cov, i, j, n));
  }
}

TEST(LinearGenerate, PerturbationSamplingMatchesInverseHessian) {
  std::mt19937_64 eng(8);
  const auto r = random_dense(eng, 5, 4);
  const DenseModel m(DenseOperator(r.a), r.lambda, r.y, column_shape(4), SolverPolicy::iterative);
  Eigen::MatrixXd h = r.a.transpose() * r.lambda.asDiagonal() * r.a;
  h.diagonal().array() += 1.0 / (r.gamma * r.gamma);
  const Eigen::MatrixXd cov = h.inverse();
  const Eigen::VectorXd mean =
      r.v + cov * (r.a.transpose() * r.lambda.cwiseProduct(r.y - r.a * r.v));

  RandomSource rng(9);
  const long n = 30000;
  support::Moments mom(4);
  for (long k = 0; k < n; ++k)
    mom.add(m.generate(column(r.v), r.gamma, rng).vec());
  const Eigen::MatrixXd emp = mom.covariance();
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(mom.mean()[i], mean[i], 5.0 * std::sqrt(cov(i, i) / n));
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(emp(i, j), cov(i, j), 5.0 * support::cov_standard_error(cov, i, j, n));
  }
}

TEST(LinearGenerate, SilentSourceGivesProx) {
  std::mt19937_64 eng(10);
  const auto r = random_dense(eng, 4, 4);
  for (auto policy : {SolverPolicy::direct, SolverPolicy::iterative}) {
    const DenseModel m(DenseOperator(r.a), r.lambda, r.y, column_shape(4), policy);
    auto rng = RandomSource::silent();
    const auto g = m.generate(column(r.v), r.gamma, rng), p = m.prox(column(r.v), r.gamma);
    for (int i = 0; i < 4; ++i)
      EXPECT_NEAR(g[i], p[i], 1e-9);
  }
}

TEST(SubsampleProx, UnsampledEntriesUnchanged) {
  const SubsamplingModel m(Shape{2, 3, 1}, {1, 4}, {0.9, -0.3}, 0.1);
  ImageTensor v(Shape{2, 3, 1}, std::vector<double>{0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  const auto out = m.prox(v, 0.2);
  for (std::size_t s : {0u, 2u, 3u, 5u})
    EXPECT_EQ(out[s], v[s]);
}

TEST(SubsampleProx, NoiselessSamplesAreExact) {
  const SubsamplingModel m(Shape{1, 3, 1}, {0, 2}, {0.9, -0.3}, 0.0);
  const auto out = m.prox(ImageTensor(Shape{1, 3, 1}, 0.5), 0.05);
  EXPECT_EQ(out[0], 0.9);
  EXPECT_EQ(out[2], -0.3);
  EXPECT_EQ(out[1], 0.5);
}

TEST(SubsampleProx, ScalarCase) {
  const SubsamplingModel m(Shape{1, 1, 1}, {0}, {1.0}, 0.1);
  const double out = m.prox(ImageTensor(Shape{1, 1, 1}, 0.2), 0.1)[0];
  const double ref = support::golden_min(
      [](double x) { return (1.0 - x) * (1.0 - x) / (2 * 0.01) + (x - 0.2) * (x - 0.2) / (2 * 0.01); },
      -2.0, 2.0);
  EXPECT_NEAR(out, ref, 1e-7);
  EXPECT_NEAR(out, 0.6, 1e-12);
}

TEST(SubsampleProx, SingletonMatchesSelectionRowLinearModel) {
  std::mt19937_64 eng(11);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double sy = u(eng), gamma = u(eng);
    const Eigen::VectorXd v = support::random_vector(5, eng);
    const double y = support::random_vector(1, eng)[0];
    const std::size_t s = static_cast<std::size_t>(trial % 5);
    const SubsamplingModel sub(column_shape(5), {s}, {y}, sy);
    Eigen::MatrixXd row = Eigen::MatrixXd::Zero(1, 5);
    row(0, static_cast<Eigen::Index>(s)) = 1.0;
    const DenseModel lin(DenseOperator(row), sy, Eigen::VectorXd::Constant(1, y), column_shape(5));
    const auto a = sub.prox(column(v), gamma), b = lin.prox(column(v), gamma);
    for (int i = 0; i < 5; ++i)
      EXPECT_NEAR(a[i], b[i], 1e-12);
  }
}

TEST(SubsampleGenerate, BranchwiseNoiseLevels) {
  const std::size_t p = 2;
  const SubsamplingModel m(column_shape(p), {0}, {0.0}, 0.1);
  const double gamma = 0.1;
  const double on = std::sqrt(0.01 * 0.01 / 0.02);
  EXPECT_NEAR(on, 0.0707107, 1e-6);
  RandomSource rng(12);
  const int n = 100000;
  double s0 = 0, s1 = 0, q0 = 0, q1 = 0;
  const ImageTensor v(column_shape(p), 0.0);
  for (int k = 0; k < n; ++k) {
    const auto out = m.generate(v, gamma, rng);
    s0 += out[0];
    q0 += out[0] * out[0];
    s1 += out[1];
    q1 += out[1] * out[1];
  }
  const double sd0 = std::sqrt(q0 / n - (s0 / n) * (s0 / n));
  const double sd1 = std::sqrt(q1 / n - (s1 / n) * (s1 / n));
  EXPECT_NEAR(sd0 / on, 1.0, 0.01);
  EXPECT_NEAR(sd1 / gamma, 1.0, 0.01);
}

TEST(SubsampleGenerate, SilentSourceGivesProx) {
  const SubsamplingModel m(Shape{2, 2, 1}, {0, 3}, {1.0, 0.5}, 0.05);
  const ImageTensor v(Shape{2, 2, 1}, 0.2);
  auto rng = RandomSource::silent();
  EXPECT_EQ(m.generate(v, 0.3, rng), m.prox(v, 0.3));
}

TEST(SubsampleGenerate, EmptySampleSetIsPureDiffusion) {
  const SubsamplingModel m(Shape{4, 4, 1}, {}, {}, 0.05);
  const ImageTensor v(Shape{4, 4, 1}, 0.3);
  RandomSource a(13), b(13);
  EXPECT_EQ(m.generate(v, 0.2, a), NullForwardModel{}.generate(v, 0.2, b));
}

TEST(SubsamplingModel, RejectsBadIndexSets) {
  EXPECT_THROW(SubsamplingModel(Shape{2, 2, 1}, {0, 0}, {1, 1}, 0.1), GeometryError);
  EXPECT_THROW(SubsamplingModel(Shape{2, 2, 1}, {4}, {1}, 0.1), GeometryError);
  EXPECT_THROW(SubsamplingModel(Shape{2, 2, 1}, {1}, {}, 0.1), GeometryError);
  EXPECT_THROW(SubsamplingModel(Shape{2, 2, 1}, {1}, {1}, -0.1), ParameterError);
}

TEST(NullModel, ZeroEnergyAndIdentityProx) {
  const ImageTensor v(Shape{3, 3, 1}, 0.4);
  EXPECT_EQ(NullForwardModel{}.energy(v), 0.0);
  EXPECT_EQ(NullForwardModel{}.prox(v, 0.1), v);
}

TEST(ProxOptimality, NoNearbyPointImprovesTheObjective) {
  std::mt19937_64 eng(14);
  std::uniform_real_distribution<double> gam(0.05, 0.8);
  auto check = [&](const auto &model, const ImageTensor &v, double gamma) {
    const ImageTensor x = model.prox(v, gamma);
    auto obj = [&](const ImageTensor &z) {
      double d = 0.0;
      for (std::size_t i = 0; i < z.size(); ++i)
        d += (z[i] - v[i]) * (z[i] - v[i]);
      return model.energy(z) + d / (2.0 * gamma * gamma);
    };
    const double f0 = obj(x);
    RandomSource rng(eng());
    for (int k = 0; k < 100; ++k) {
      ImageTensor z = x;
      const auto dir = rng.normal_tensor(x.shape());
      const double norm = dir.vec().norm();
      for (std::size_t i = 0; i < z.size(); ++i)
        z[i] += 1e-3 * dir[i] / norm;
      EXPECT_LE(f0, obj(z));
    }
  };
  for (int trial = 0; trial < 5; ++trial) {
    const auto r = random_dense(eng, 6, 5);
    check(DenseModel(DenseOperator(r.a), r.lambda, r.y, column_shape(5)), column(r.v), r.gamma);
    check(DenseModel(DenseOperator(r.a), r.lambda, r.y, column_shape(5), SolverPolicy::iterative),
          column(r.v), r.gamma);
    check(SubsamplingModel(column_shape(5), {0, 3}, {r.y[0], r.y[1]}, 0.2), column(r.v), gam(eng));
  }
}

TEST(SmoothModel, QuarticGeneratorMatchesGridDensity) {
  // u1(x) = x^4 / 2; q1(x | v) on a fine grid vs histogram of prox + gamma W.
  const auto energy = [](const Eigen::VectorXd &x) { return 0.5 * std::pow(x[0], 4); };
  const auto grad = [](const Eigen::VectorXd &x) {
    return Eigen::VectorXd::Constant(1, 2.0 * std::pow(x[0], 3));
  };
  const SmoothForwardModel m(Shape{1, 1, 1}, energy, grad);
  const double v = 0.9;
  for (double gamma : {0.05, 0.02}) {
    const ImageTensor vin(Shape{1, 1, 1}, v);
    const double centre = m.prox(vin, gamma)[0];
    const int bins = 64;
    const double lo = centre - 6 * gamma, hi = centre + 6 * gamma, w = (hi - lo) / bins;
    std::vector<double> ref(bins, 0.0), hist(bins, 0.0);
    const int sub = 200;
    double z = 0.0;
    for (int b = 0; b < bins; ++b)
      for (int k = 0; k < sub; ++k) {
        const double x = lo + w * (b + (k + 0.5) / sub);
        const double d = std::exp(-0.5 * std::pow(x, 4) - (x - v) * (x - v) / (2 * gamma * gamma) +
                                  0.5 * std::pow(centre, 4) +
                                  (centre - v) * (centre - v) / (2 * gamma * gamma));
        ref[b] += d;
        z += d;
      }
    RandomSource rng(15);
    const int n = 200000;
    for (int k = 0; k < n; ++k) {
      const double x = m.generate(vin, gamma, rng)[0];
      const int b = static_cast<int>(std::floor((x - lo) / w));
      if (b >= 0 && b < bins)
        hist[b] += 1.0;
    }
    double tv = 0.0;
    for (int b = 0; b < bins; ++b)
      tv += std::abs(hist[b] / n - ref[b] / z);
    EXPECT_LT(0.5 * tv, 0.05) << "gamma " << gamma;
  }
}

TEST(ConjugateGradient, SolvesSpdSystemAndReportsFailure) {
  std::mt19937_64 eng(16);
  const Eigen::MatrixXd b = support::random_matrix(6, 6, eng);
  const Eigen::MatrixXd h = b.transpose() * b + Eigen::MatrixXd::Identity(6, 6);
  const Eigen::VectorXd rhs = support::random_vector(6, eng);
  auto apply = [&](const Eigen::VectorXd &x) -> Eigen::VectorXd { return h * x; };
  const auto res = conjugate_gradient(apply, rhs, Eigen::VectorXd::Zero(6), 1e-12, 100);
  EXPECT_LT((h * res.x - rhs).norm(), 1e-10 * rhs.norm());
  try {
    conjugate_gradient(apply, rhs, Eigen::VectorXd::Zero(6), 1e-12, 1);
    FAIL() << "expected SolverError";
  } catch (const SolverError &e) {
    EXPECT_GT(e.residual(), 1e-12);
  }
}

TEST(AnyForwardModel, Forwards) {
  const AnyForwardModel any = SubsamplingModel(Shape{1, 1, 1}, {0}, {1.0}, 0.1);
  EXPECT_NEAR(any.prox(ImageTensor(Shape{1, 1, 1}, 0.2), 0.1)[0], 0.6, 1e-12);
  EXPECT_NEAR(any.energy(ImageTensor(Shape{1, 1, 1}, 0.0)), 50.0, 1e-12);
}
