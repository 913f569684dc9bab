#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "stpca/errors.hpp"
#include "stpca/model.hpp"

using namespace stpca;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, rng::Stream& s) {
  Matrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = s.normal();
  return a;
}

StiefelPoint coordinate_frame(Eigen::Index n, std::vector<Eigen::Index> cols, Scale scale) {
  Matrix x = Matrix::Zero(n, static_cast<Eigen::Index>(cols.size()));
  const double s = scale == Scale::Unit ? 1.0 : std::sqrt(double(n));
  for (std::size_t k = 0; k < cols.size(); ++k) x(cols[k], static_cast<Eigen::Index>(k)) = s;
  return StiefelPoint(x, scale);
}

// <W, a^{(x)3}> by an explicit triple loop over entry().
double brute3(const NoiseTensor& w, const Vector& a) {
  const Eigen::Index n = w.dim();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index idx[3] = {i, j, k};
        sum += w.entry(idx) * a(i) * a(j) * a(k);
      }
  return sum;
}

NoiseTensor symmetrized3(const NoiseTensor& w) {
  const Eigen::Index n = w.dim();
  std::vector<double> v(static_cast<std::size_t>(n * n * n));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < n; ++k) {
        const Eigen::Index perms[6][3] = {{i, j, k}, {i, k, j}, {j, i, k}, {j, k, i}, {k, i, j}, {k, j, i}};
        double s = 0.0;
        for (const auto& q : perms) s += w.entry(q);
        v[static_cast<std::size_t>((i * n + j) * n + k)] = s / 6.0;
      }
  return NoiseTensor::from_values(n, 3, std::move(v));
}

}  // namespace

TEST(Ipow, SmallPowers) {
  EXPECT_EQ(ipow(2.0, 0), 1.0);
  EXPECT_EQ(ipow(-3.0, 3), -27.0);
  EXPECT_EQ(ipow(0.5, 4), 0.0625);
}

TEST(MakeModel, Validation) {
  rng::Stream s(1);
  const SpikedModel m = make_model(4, 1, 2, Vector::Ones(1), s);
  EXPECT_EQ(m.v.rank(), 1);
  EXPECT_NEAR(m.v.data().norm(), 1.0, 1e-14);
  Vector bad(2);
  bad << 1.0, 2.0;
  EXPECT_THROW(make_model(4, 2, 2, bad, s), InvalidArgument);
  EXPECT_THROW(make_model(4, 2, 2, Vector::Ones(1), s), DimensionError);
  EXPECT_THROW(make_model(4, 1, 1, Vector::Ones(1), s), InvalidArgument);
  EXPECT_THROW(make_model(2, 3, 2, Vector::Ones(3), s), DimensionError);
  EXPECT_THROW(make_model(4, 1, 2, Vector::Zero(1), s), InvalidArgument);
}

TEST(MakeModel, SeedDeterminesFrame) {
  rng::Stream a(9), b(9);
  EXPECT_TRUE(make_model(10, 2, 3, Vector::Ones(2), a).v.data() ==
              make_model(10, 2, 3, Vector::Ones(2), b).v.data());
}

TEST(Noise, RademacherEntriesAreSigns) {
  const NoiseTensor w = NoiseTensor::materialized(7, 3, {NoiseDist::Rademacher, 1.0}, 5);
  for (std::uint64_t k = 0; k < w.size(); ++k) EXPECT_EQ(std::abs(w.entry_flat(k)), 1.0);
}

TEST(Noise, GaussianMeanWithinClt) {
  const NoiseTensor w = NoiseTensor::materialized(20, 3, {}, 6);
  double sum = 0.0;
  for (std::uint64_t k = 0; k < w.size(); ++k) sum += w.entry_flat(k);
  EXPECT_LE(std::abs(sum / 8000.0), 4.0 / std::sqrt(8000.0));
}

TEST(Noise, StreamedMatchesMaterialized) {
  for (NoiseDist dist : {NoiseDist::Gaussian, NoiseDist::Rademacher}) {
    const NoiseTensor s = NoiseTensor::streamed(9, 4, {dist, 1.3}, 17);
    const NoiseTensor m = NoiseTensor::materialized(9, 4, {dist, 1.3}, 17);
    EXPECT_EQ(m.backend(), NoiseTensor::Backend::Materialized);
    rng::Stream pick(2);
    for (int k = 0; k < 100; ++k) {
      const Eigen::Index idx[4] = {Eigen::Index(pick() % 9), Eigen::Index(pick() % 9),
                                   Eigen::Index(pick() % 9), Eigen::Index(pick() % 9)};
      EXPECT_EQ(s.entry(idx), m.entry(idx));
    }
    std::vector<double> scratch;
    const double* f = s.fiber(37, scratch);
    for (int k = 0; k < 9; ++k) EXPECT_EQ(f[k], m.entry_flat(37 * 9 + k));
  }
}

TEST(Noise, MaterializeRespectsBudget) {
  const NoiseTensor s = NoiseTensor::streamed(10, 4, {}, 1);
  EXPECT_THROW(s.materialize(1000), InvalidArgument);
  EXPECT_EQ(s.materialize(10000).backend(), NoiseTensor::Backend::Materialized);
  EXPECT_EQ(NoiseTensor::sample(10, 4, {}, 1, 1000).backend(), NoiseTensor::Backend::Streamed);
}

TEST(Observation, ValueAtSpikeAndOrthogonal) {
  rng::Stream s(3);
  const Eigen::Index n = 8;
  const StiefelPoint v = coordinate_frame(n, {0}, Scale::Unit);
  Vector lambda(1);
  lambda << 1.7;
  const SpikedModel model = make_model(n, 1, 3, lambda, s, v);
  const NoiseTensor w = NoiseTensor::zeros(n, 3);
  const Observation y(w, model);
  EXPECT_NEAR(y.value(v.data().col(0)), std::sqrt(double(n)) * 1.7, 1e-13);
  Vector a = Vector::Zero(n);
  a(3) = 1.0;
  EXPECT_EQ(y.value(a), 0.0);
}

TEST(Observation, MatchesBruteForceTripleSum) {
  rng::Stream s(4);
  const Eigen::Index n = 6;
  Vector lambda(2);
  lambda << 2.0, 0.5;
  const SpikedModel model = make_model(n, 2, 3, lambda, s);
  for (auto backend : {0, 1}) {
    const NoiseTensor w = backend ? NoiseTensor::streamed(n, 3, {}, 8) : NoiseTensor::materialized(n, 3, {}, 8);
    const Observation y(w, model);
    const Vector a = gaussian(n, 1, s).col(0).normalized();
    double planted = 0.0;
    for (int i = 0; i < 2; ++i) planted += lambda(i) * std::pow(model.v.data().col(i).dot(a), 3);
    const double expected = brute3(w, a) + std::sqrt(double(n)) * planted;
    EXPECT_NEAR(y.value(a), expected, 1e-12 * std::abs(expected));
  }
}

TEST(Loss, SpikeAndOrthogonalAndBruteForce) {
  rng::Stream s(5);
  const Eigen::Index n = 6;
  Vector lambda(1);
  lambda << 1.5;
  const StiefelPoint v = coordinate_frame(n, {1}, Scale::Unit);
  const SpikedModel model = make_model(n, 1, 3, lambda, s, v);
  const NoiseTensor zero = NoiseTensor::zeros(n, 3);
  EXPECT_NEAR(loss(v, Observation(zero, model)), -std::sqrt(double(n)) * 2.25, 1e-13);
  EXPECT_EQ(loss(coordinate_frame(n, {4}, Scale::Unit), Observation(zero, model)), 0.0);

  Vector l2(2);
  l2 << 1.2, 0.7;
  const SpikedModel m2 = make_model(n, 2, 3, l2, s);
  const NoiseTensor w = NoiseTensor::materialized(n, 3, {}, 9);
  const StiefelPoint x = sample_invariant(n, 2, Scale::Unit, s);
  double expected = 0.0;
  for (int j = 0; j < 2; ++j) {
    const Vector a = x.data().col(j);
    double planted = 0.0;
    for (int i = 0; i < 2; ++i) planted += l2(i) * std::pow(m2.v.data().col(i).dot(a), 3);
    expected -= l2(j) * (brute3(w, a) + std::sqrt(double(n)) * planted);
  }
  EXPECT_NEAR(loss(x, Observation(w, m2)), expected, 1e-12 * std::abs(expected));
  EXPECT_NEAR(population_loss(x, m2), loss(x, Observation(zero, m2)), 1e-12);
}

TEST(GradNoise, ZeroTensor) {
  rng::Stream s(6);
  const StiefelPoint x = sample_invariant(5, 2, Scale::Unit, s);
  EXPECT_EQ(grad_noise(NoiseTensor::zeros(5, 3), x, Vector::Ones(2)).norm(), 0.0);
}

TEST(GradNoise, FirstModeEqualsExactForSymmetricTensor) {
  rng::Stream s(7);
  const NoiseTensor w = symmetrized3(NoiseTensor::materialized(5, 3, {}, 3));
  const StiefelPoint x = sample_invariant(5, 2, Scale::Unit, s);
  const Matrix exact = grad_noise(w, x, Vector::Ones(2), GradMode::Exact);
  const Matrix first = grad_noise(w, x, Vector::Ones(2), GradMode::FirstMode);
  EXPECT_LE((exact - first).norm(), 1e-12 * exact.norm());
}

TEST(GradNoise, FiniteDifferences) {
  rng::Stream s(8);
  for (int p : {2, 3, 4}) {
    const Eigen::Index n = 5;
    const NoiseTensor w = NoiseTensor::materialized(n, p, {}, 10 + p);
    const StiefelPoint x = sample_invariant(n, 1, Scale::Unit, s);
    const Matrix g = noise_gradients(w, x.data(), GradMode::Exact);
    for (int k = 0; k < 5; ++k) {
      const Matrix d = project_tangent(x, gaussian(n, 1, s)).data;
      const double h = 1e-5;
      const double fd = (noise_values(w, x.data() + h * d)(0) - noise_values(w, x.data() - h * d)(0)) / (2 * h);
      const double an = (g.transpose() * d)(0, 0);
      EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd))) << "p=" << p;
    }
  }
}

TEST(GradPopulation, OrthogonalAndSpike) {
  rng::Stream s(9);
  const Eigen::Index n = 8;
  Vector lambda(1);
  lambda << 2.0;
  const StiefelPoint v = coordinate_frame(n, {0}, Scale::Unit);
  const SpikedModel m3 = make_model(n, 1, 3, lambda, s, v);
  EXPECT_EQ(grad_population(coordinate_frame(n, {2}, Scale::Unit), m3).norm(), 0.0);
  const SpikedModel m2 = make_model(n, 1, 2, lambda, s, v);
  const Matrix g = grad_population(v, m2);
  EXPECT_LT((g - (-2.0 * std::sqrt(double(n)) * 4.0) * v.data()).norm(), 1e-12);
}

TEST(GradPopulation, FiniteDifferences) {
  rng::Stream s(10);
  const Eigen::Index n = 10;
  Vector lambda(2);
  lambda << 3.0, 1.0;
  const SpikedModel model = make_model(n, 2, 3, lambda, s);
  const StiefelPoint x = sample_invariant(n, 2, Scale::Unit, s);
  const Matrix g = grad_population(x, model);
  for (int k = 0; k < 10; ++k) {
    const Matrix d = gaussian(n, 2, s);
    const double h = 1e-5;
    const double fd = (population_loss(StiefelPoint::unchecked(x.data() + h * d, Scale::Unit), model) -
                       population_loss(StiefelPoint::unchecked(x.data() - h * d, Scale::Unit), model)) /
                      (2 * h);
    EXPECT_NEAR((g.array() * d.array()).sum(), fd, 1e-7 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Hamiltonian, ZeroAndHandContraction) {
  rng::Stream s(11);
  const StiefelPoint x = sample_invariant(6, 1, Scale::SqrtN, s);
  EXPECT_EQ(hamiltonian_H0(NoiseTensor::zeros(6, 3), x, Vector::Ones(1)), 0.0);
  const NoiseTensor ones = NoiseTensor::from_values(2, 2, {1, 1, 1, 1});
  Matrix xd(2, 1);
  xd << std::sqrt(2.0), 0.0;
  Vector lambda(1);
  lambda << 0.8;
  EXPECT_NEAR(hamiltonian_H0(ones, StiefelPoint(xd, Scale::SqrtN), lambda), std::sqrt(2.0) * 0.8, 1e-14);
  EXPECT_THROW(hamiltonian_H0(ones, StiefelPoint(xd / std::sqrt(2.0), Scale::Unit), lambda),
               ConventionError);
}

TEST(Hamiltonian, MonteCarloVariance) {
  // With unit-variance entries and |x|^2 = N, Var H_0 = lambda^2 N^{1-p} N^p.
  const Eigen::Index n = 16;
  rng::Stream s(12);
  const StiefelPoint x = sample_invariant(n, 1, Scale::SqrtN, s);
  Vector lambda(1);
  lambda << 1.5;
  const int draws = 10000;
  double m1 = 0, m2 = 0;
  for (int k = 0; k < draws; ++k) {
    const double h = hamiltonian_H0(NoiseTensor::streamed(n, 3, {}, rng::derive_seed(12, k)), x, lambda);
    m1 += h;
    m2 += h * h;
  }
  const double var = m2 / draws - (m1 / draws) * (m1 / draws);
  EXPECT_NEAR(var, 2.25 * n, 0.1 * 2.25 * n);
}

TEST(Hamiltonian, GradientMatchesFiniteDifferences) {
  rng::Stream s(13);
  const Eigen::Index n = 7;
  const NoiseTensor w = NoiseTensor::materialized(n, 3, {}, 4);
  Vector lambda(2);
  lambda << 1.0, 0.4;
  const StiefelPoint x = sample_invariant(n, 2, Scale::SqrtN, s);
  const Matrix g = grad_H0(w, x, lambda);
  const Matrix d = gaussian(n, 2, s);
  const double h = 1e-5;
  const double fd = (hamiltonian_H0(w, StiefelPoint::unchecked(x.data() + h * d, Scale::SqrtN), lambda) -
                     hamiltonian_H0(w, StiefelPoint::unchecked(x.data() - h * d, Scale::SqrtN), lambda)) /
                    (2 * h);
  EXPECT_NEAR((g.array() * d.array()).sum(), fd, 1e-7 * std::max(1.0, std::abs(fd)));
}

TEST(RiskForce, ZeroAtOrthogonalFrame) {
  rng::Stream s(14);
  const Eigen::Index n = 9;
  const SpikedModel model = make_model(n, 2, 3, Vector::Ones(2), s, coordinate_frame(n, {0, 1}, Scale::Unit));
  const StiefelPoint x = coordinate_frame(n, {2, 3}, Scale::SqrtN);
  EXPECT_EQ(empirical_risk_force(x, NoiseTensor::zeros(n, 3), model, 1.0).data.norm(), 0.0);
}

TEST(RiskForce, PushesCorrelationUp) {
  rng::Stream s(15);
  const Eigen::Index n = 12;
  Vector lambda(1);
  lambda << 1.0;
  const SpikedModel model = make_model(n, 1, 3, lambda, s);
  const StiefelPoint v = model.v_sqrt_n();
  for (double target : {0.1, 0.5, 0.9}) {
    // x = target v + sqrt(1 - target^2) u with u orthogonal to v
    Vector u = gaussian(n, 1, s).col(0);
    u -= v.data().col(0) * (v.data().col(0).dot(u) / n);
    u *= std::sqrt(double(n)) / u.norm();
    const StiefelPoint x(target * v.data() + std::sqrt(1 - target * target) * u, Scale::SqrtN);
    const TangentVector f = empirical_risk_force(x, NoiseTensor::zeros(n, 3), model, 1.0);
    EXPECT_GT(v.data().col(0).dot(f.data.col(0)) / n, 0.0);
  }
}

TEST(RiskForce, IsMinusRiemannianGradient) {
  rng::Stream s(16);
  const Eigen::Index n = 8;
  Vector lambda(2);
  lambda << 2.0, 1.0;
  const SpikedModel model = make_model(n, 2, 3, lambda, s);
  const NoiseTensor w = NoiseTensor::materialized(n, 3, {}, 21);
  const StiefelPoint x = sample_invariant(n, 2, Scale::SqrtN, s);
  const double m = 9.0;
  const TangentVector f = empirical_risk_force(x, w, model, m);
  EXPECT_LT(tangency_error(x, f.data), 1e-10);
  for (int k = 0; k < 5; ++k) {
    const TangentVector d = project_tangent(x, gaussian(n, 2, s));
    const double h = 1e-5;
    const double fd = (empirical_risk(polar_retract(x, TangentVector{h * d.data}), w, model, m) -
                       empirical_risk(polar_retract(x, TangentVector{-h * d.data}), w, model, m)) /
                      (2 * h);
    const double an = -(f.data.array() * d.data.array()).sum();
    EXPECT_NEAR(an, fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}
