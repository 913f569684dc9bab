#include <gtest/gtest.h>

#include <cmath>

#include "stpca/errors.hpp"
#include "stpca/manifold.hpp"

using namespace stpca;

namespace {

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, rng::Stream& s) {
  Matrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) a(i, j) = s.normal();
  return a;
}

double sym_error(const StiefelPoint& x, const Matrix& u) {
  return (x.data().transpose() * u + u.transpose() * x.data()).norm() / x.scale_sq();
}

}  // namespace

TEST(StiefelPoint, RejectsNonOrthonormal) {
  EXPECT_THROW(StiefelPoint(Matrix::Ones(3, 2), Scale::Unit), Error);
  EXPECT_THROW(StiefelPoint(Matrix::Identity(2, 3), Scale::Unit), Error);
  EXPECT_NO_THROW(StiefelPoint(Matrix::Identity(3, 2), Scale::Unit));
  EXPECT_NO_THROW(StiefelPoint(std::sqrt(3.0) * Matrix::Identity(3, 2), Scale::SqrtN));
}

TEST(StiefelPoint, RescaleRoundTrip) {
  rng::Stream s(1);
  const StiefelPoint x = sample_invariant(9, 2, Scale::Unit, s);
  const StiefelPoint y = x.rescaled(Scale::SqrtN);
  EXPECT_NEAR((y.data() - 3.0 * x.data()).norm(), 0.0, 1e-14);
  EXPECT_LT(y.orthonormality_error(), 1e-12);
  EXPECT_NEAR((y.rescaled(Scale::Unit).data() - x.data()).norm(), 0.0, 1e-14);
}

TEST(SampleInvariant, OneDimensionalIsPlusMinusOne) {
  int plus = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    rng::Stream s(seed);
    const StiefelPoint x = sample_invariant(1, 1, Scale::Unit, s);
    EXPECT_NEAR(std::abs(x.data()(0, 0)), 1.0, 1e-15);
    plus += x.data()(0, 0) > 0;
  }
  EXPECT_NEAR(plus, 200, 4 * 10);  // 4 sd of Binomial(400, 1/2)
}

TEST(SampleInvariant, SameSeedIdentical) {
  rng::Stream a(5), b(5);
  const StiefelPoint x = sample_invariant(30, 4, Scale::SqrtN, a);
  const StiefelPoint y = sample_invariant(30, 4, Scale::SqrtN, b);
  EXPECT_TRUE(x.data() == y.data());
  EXPECT_LT(x.orthonormality_error(), 1e-12);
}

TEST(SampleInvariant, ScaledCorrelationsAreStandardNormal) {
  const Eigen::Index n = 100, r = 3;
  rng::Stream vs(77);
  const StiefelPoint v = sample_invariant(n, r, Scale::Unit, vs);
  const int draws = 10000;
  Matrix sum = Matrix::Zero(r, r), sum_sq = Matrix::Zero(r, r);
  rng::Stream s(78);
  for (int k = 0; k < draws; ++k) {
    const Matrix m = std::sqrt(double(n)) * correlation_matrix(v, sample_invariant(n, r, Scale::Unit, s)).data;
    sum += m;
    sum_sq += m.cwiseProduct(m);
  }
  const Matrix mean = sum / draws;
  const Matrix var = sum_sq / draws - mean.cwiseProduct(mean);
  EXPECT_LE(mean.cwiseAbs().maxCoeff(), 0.05);
  EXPECT_GE(var.minCoeff(), 0.95);
  EXPECT_LE(var.maxCoeff(), 1.05);
}

TEST(ProjectTangent, FixedPointsAndTangency) {
  rng::Stream s(3);
  for (Scale scale : {Scale::Unit, Scale::SqrtN}) {
    const StiefelPoint x = sample_invariant(10, 2, scale, s);
    EXPECT_LT(project_tangent(x, x.data()).data.norm(), 1e-12 * std::sqrt(x.scale_sq()));
    const Matrix a = gaussian(10, 2, s);
    const TangentVector pa = project_tangent(x, a);
    EXPECT_LE(sym_error(x, pa.data), 1e-10);
    EXPECT_LT((project_tangent(x, pa.data).data - pa.data).norm(), 1e-12 * (1 + pa.data.norm()));
  }
}

TEST(RiemannianGradient, CancelsOnX) {
  rng::Stream s(4);
  for (Scale scale : {Scale::Unit, Scale::SqrtN}) {
    const StiefelPoint x = sample_invariant(7, 3, scale, s);
    EXPECT_LT(riemannian_gradient(x, x.data()).data.norm(), 1e-12 * std::sqrt(x.scale_sq()));
  }
}

TEST(RiemannianGradient, EqualsProjection) {
  rng::Stream s(5);
  const StiefelPoint x = sample_invariant(12, 3, Scale::Unit, s);
  const Matrix g = gaussian(12, 3, s);
  EXPECT_LE((riemannian_gradient(x, g).data - project_tangent(x, g).data).norm(), 1e-12);
}

TEST(TangentAt, ChecksTangency) {
  rng::Stream s(6);
  const StiefelPoint x = sample_invariant(6, 2, Scale::Unit, s);
  EXPECT_THROW(TangentVector::tangent_at(x, x.data()), Error);
  EXPECT_NO_THROW(TangentVector::tangent_at(x, project_tangent(x, gaussian(6, 2, s)).data));
}

TEST(PolarRetract, ZeroIsIdentity) {
  rng::Stream s(7);
  const StiefelPoint x = sample_invariant(8, 2, Scale::SqrtN, s);
  const StiefelPoint y = polar_retract(x, TangentVector{Matrix::Zero(8, 2)});
  EXPECT_LT((y.data() - x.data()).norm(), 1e-13);
}

TEST(PolarRetract, StaysOnManifold) {
  rng::Stream s(8);
  for (Scale scale : {Scale::Unit, Scale::SqrtN}) {
    const StiefelPoint x = sample_invariant(8, 2, scale, s);
    TangentVector u = project_tangent(x, gaussian(8, 2, s));
    u.data *= 0.3 * std::sqrt(x.scale_sq()) / u.data.norm();
    EXPECT_LE(polar_retract(x, u).orthonormality_error(), 1e-12);
  }
}

TEST(PolarRetract, SphereCaseIsNormalization) {
  rng::Stream s(9);
  const StiefelPoint x = sample_invariant(5, 1, Scale::Unit, s);
  const TangentVector u = project_tangent(x, gaussian(5, 1, s));
  const Matrix expected = (x.data() + u.data) / (x.data() + u.data).norm();
  EXPECT_LT((polar_retract(x, u).data() - expected).norm(), 1e-14);
}

TEST(PolarRetract, EqualsPolarFactorBySvd) {
  // Independent oracle: the polar factor U V^T of the thin SVD of X + U.
  rng::Stream s(10);
  const StiefelPoint x = sample_invariant(9, 3, Scale::Unit, s);
  const TangentVector u = project_tangent(x, gaussian(9, 3, s));
  Eigen::JacobiSVD<Matrix> svd(x.data() + u.data, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Matrix polar = svd.matrixU() * svd.matrixV().transpose();
  EXPECT_LT((polar_retract(x, u).data() - polar).norm(), 1e-12);
}

TEST(PolarRetract, ManyStepsDriftBound) {
  rng::Stream s(11);
  StiefelPoint x = sample_invariant(64, 4, Scale::Unit, s);
  for (int k = 0; k < 2000; ++k) {
    TangentVector u = project_tangent(x, gaussian(64, 4, s));
    u.data *= 0.1 / u.data.norm();
    x = polar_retract(x, u);
  }
  EXPECT_LE(x.orthonormality_error(), kDriftTol);
}

TEST(PolarRetract, RemovesAccumulatedDrift) {
  rng::Stream s(12);
  const StiefelPoint x = sample_invariant(16, 3, Scale::SqrtN, s);
  const StiefelPoint drifted = StiefelPoint::unchecked(x.data() * (1.0 + 5e-9), Scale::SqrtN);
  TangentVector u = project_tangent(drifted, gaussian(16, 3, s));
  u.data *= 50.0 * std::sqrt(x.scale_sq()) / u.data.norm();
  EXPECT_LE(polar_retract(drifted, u).orthonormality_error(), 1e-12);
}

TEST(InvSqrtPsd, Cases) {
  EXPECT_LT((inv_sqrt_psd(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 4;
  d(1, 1) = 9;
  Matrix e = Matrix::Zero(2, 2);
  e(0, 0) = 0.5;
  e(1, 1) = 1.0 / 3.0;
  EXPECT_LT((inv_sqrt_psd(d) - e).norm(), 1e-15);
  rng::Stream s(12);
  const Matrix a = gaussian(4, 4, s);
  const Matrix spd = a * a.transpose() + 0.5 * Matrix::Identity(4, 4);
  const Matrix t = inv_sqrt_psd(spd);
  EXPECT_LE((t * t * spd - Matrix::Identity(4, 4)).norm(), 1e-9);
}

TEST(InvSqrtPsd, RejectsSingular) {
  Matrix s = Matrix::Zero(2, 2);
  s(0, 0) = 1;
  EXPECT_THROW(inv_sqrt_psd(s), Error);
}

TEST(CorrelationMatrix, Cases) {
  rng::Stream s(13);
  for (Scale scale : {Scale::Unit, Scale::SqrtN}) {
    const StiefelPoint v = sample_invariant(10, 3, scale, s);
    EXPECT_LT((correlation_matrix(v, v).data - Matrix::Identity(3, 3)).norm(), 1e-13);
    const StiefelPoint neg(-v.data(), scale);
    EXPECT_LT((correlation_matrix(v, neg).data + Matrix::Identity(3, 3)).norm(), 1e-13);
    const Matrix q = sample_invariant(3, 3, Scale::Unit, s).data();
    const StiefelPoint vq(v.data() * q, scale);
    EXPECT_LT((correlation_matrix(v, vq).data - q).norm(), 1e-13);
  }
}

TEST(CorrelationMatrix, RejectsMixedScales) {
  rng::Stream s(14);
  const StiefelPoint v = sample_invariant(5, 1, Scale::Unit, s);
  const StiefelPoint x = sample_invariant(5, 1, Scale::SqrtN, s);
  EXPECT_THROW(correlation_matrix(v, x), ConventionError);
}

TEST(OverlapGram, Cases) {
  const OverlapGram id = overlap_gram(CorrelationMatrix{Matrix::Identity(3, 3)});
  EXPECT_LT((id.gram - Matrix::Identity(3, 3)).norm(), 1e-15);
  EXPECT_LT((id.eigenvalues - Vector::Ones(3)).norm(), 1e-14);
  EXPECT_LT(overlap_gram(CorrelationMatrix{Matrix::Zero(2, 2)}).gram.norm(), 1e-15);
  Matrix m = Matrix::Zero(2, 2);
  m(0, 0) = 0.6;
  m(1, 1) = 0.8;
  const OverlapGram g = overlap_gram(CorrelationMatrix{m});
  EXPECT_NEAR(g.gram(0, 0), 0.36, 1e-15);
  EXPECT_NEAR(g.gram(1, 1), 0.64, 1e-15);
  EXPECT_NEAR(g.eigenvalues(0), 0.64, 1e-15);
  EXPECT_NEAR(g.eigenvalues(1), 0.36, 1e-15);
}
