#include "stpca/manifold.hpp"

#include <cmath>
#include <sstream>

#include "stpca/errors.hpp"

namespace stpca {

namespace {

void check_dims(Eigen::Index n, Eigen::Index r) {
  if (r < 1 || n < r) {
    std::ostringstream os;
    os << "invalid Stiefel dimensions N=" << n << ", r=" << r << " (need N >= r >= 1)";
    throw DimensionError(os.str());
  }
}

void check_same_shape(const StiefelPoint& x, const Matrix& a, const char* what) {
  if (a.rows() != x.dim() || a.cols() != x.rank()) {
    std::ostringstream os;
    os << what << ": shape " << a.rows() << "x" << a.cols() << " does not match point "
       << x.dim() << "x" << x.rank();
    throw DimensionError(os.str());
  }
}

Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace

const char* to_string(Scale scale) { return scale == Scale::Unit ? "unit" : "sqrtN"; }

double scale_sq(Scale scale, Eigen::Index n) {
  return scale == Scale::Unit ? 1.0 : static_cast<double>(n);
}

StiefelPoint::StiefelPoint(Matrix data, Scale scale, std::nullptr_t)
    : data_(std::move(data)), scale_(scale) {
  check_dims(data_.rows(), data_.cols());
}

StiefelPoint::StiefelPoint(Matrix data, Scale scale, double tol)
    : StiefelPoint(std::move(data), scale, nullptr) {
  const double err = orthonormality_error();
  if (!(err <= tol)) {
    std::ostringstream os;
    os << "matrix is not on the Stiefel manifold (" << to_string(scale)
       << " scale): ||X^T X/scale^2 - I||_F = " << err;
    throw NumericError(os.str());
  }
}

StiefelPoint StiefelPoint::unchecked(Matrix data, Scale scale) {
  return StiefelPoint(std::move(data), scale, nullptr);
}

double StiefelPoint::scale_sq() const { return stpca::scale_sq(scale_, dim()); }

double StiefelPoint::orthonormality_error() const {
  const Matrix gram = data_.transpose() * data_ / scale_sq();
  return (gram - Matrix::Identity(rank(), rank())).norm();
}

StiefelPoint StiefelPoint::rescaled(Scale target) const {
  if (target == scale_) return *this;
  const double factor = std::sqrt(stpca::scale_sq(target, dim()) / scale_sq());
  return StiefelPoint(data_ * factor, target, nullptr);
}

double tangency_error(const StiefelPoint& x, const Matrix& u) {
  check_same_shape(x, u, "tangency_error");
  const Matrix xtu = x.data().transpose() * u;
  return (xtu + xtu.transpose()).norm() / x.scale_sq();
}

TangentVector TangentVector::tangent_at(const StiefelPoint& x, Matrix u, double tol) {
  const double err = tangency_error(x, u);
  const double bound = tol * (1.0 + u.norm() * x.data().norm() / x.scale_sq());
  if (!(err <= bound)) {
    std::ostringstream os;
    os << "matrix is not tangent at X: ||X^T U + U^T X||_F/scale^2 = " << err;
    throw NumericError(os.str());
  }
  return TangentVector{std::move(u)};
}

StiefelPoint sample_invariant(Eigen::Index n, Eigen::Index r, Scale scale,
                              rng::Stream& stream) {
  check_dims(n, r);
  Matrix z(n, r);
  // Column-major fill keeps the draw order independent of Eigen internals.
  for (Eigen::Index j = 0; j < r; ++j)
    for (Eigen::Index i = 0; i < n; ++i) z(i, j) = stream.normal();
  const double s2 = stpca::scale_sq(scale, n);
  const Matrix gram = z.transpose() * z / s2;
  return StiefelPoint::unchecked(z * inv_sqrt_psd(gram), scale);
}

TangentVector project_tangent(const StiefelPoint& x, const Matrix& a) {
  check_same_shape(x, a, "project_tangent");
  const Matrix xta = x.data().transpose() * a;
  return TangentVector{a - x.data() * sym(xta) / x.scale_sq()};
}

TangentVector riemannian_gradient(const StiefelPoint& x, const Matrix& g) {
  check_same_shape(x, g, "riemannian_gradient");
  const Matrix xtg = x.data().transpose() * g;
  const Matrix gtx = g.transpose() * x.data();
  return TangentVector{g - x.data() * (xtg + gtx) / (2.0 * x.scale_sq())};
}

StiefelPoint polar_retract(const StiefelPoint& x, const TangentVector& u) {
  check_same_shape(x, u.data, "polar_retract");
  if (!u.data.allFinite()) throw NumericError("polar_retract: non-finite tangent step");
  // Polar factor of X + U from its actual Gram. Equal to (I + U^T U / s^2)^{-1/2}
  // on the manifold, and it does not let rounding in X or U accumulate.
  const Matrix y = x.data() + u.data;
  const Matrix s = y.transpose() * y / x.scale_sq();
  Matrix t;
  try {
    t = inv_sqrt_psd(s);
  } catch (const SingularMatrixError&) {
    throw NumericError("polar_retract: (X + U)^T (X + U) / scale^2 is not positive definite");
  }
  return StiefelPoint::unchecked(y * t, x.scale());
}

Matrix inv_sqrt_psd(const Matrix& s) {
  if (s.rows() != s.cols()) throw DimensionError("inv_sqrt_psd: matrix is not square");
  if (!s.allFinite()) throw NumericError("inv_sqrt_psd: non-finite input");
  const Matrix symmetric = sym(s);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetric);
  if (eig.info() != Eigen::Success) throw NumericError("inv_sqrt_psd: eigensolver failed");
  const Vector& ev = eig.eigenvalues();
  const double floor = 1e-12 * std::max(symmetric.norm(), 1e-300);
  if (ev.minCoeff() <= floor) {
    std::ostringstream os;
    os << "inv_sqrt_psd: smallest eigenvalue " << ev.minCoeff() << " <= " << floor;
    throw SingularMatrixError(os.str());
  }
  const Matrix& q = eig.eigenvectors();
  return q * ev.cwiseSqrt().cwiseInverse().asDiagonal() * q.transpose();
}

CorrelationMatrix correlation_matrix(const StiefelPoint& v, const StiefelPoint& x) {
  if (v.scale() != x.scale())
    throw ConventionError("correlation_matrix: frames use different scale conventions");
  if (v.dim() != x.dim() || v.rank() != x.rank())
    throw DimensionError("correlation_matrix: frames have different shapes");
  return CorrelationMatrix{v.data().transpose() * x.data() / x.scale_sq()};
}

Vector sorted_eigenvalues(const Matrix& symmetric) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym(symmetric), Eigen::EigenvaluesOnly);
  Vector ev = eig.eigenvalues();  // ascending
  return ev.reverse();
}

OverlapGram overlap_gram(const CorrelationMatrix& m) {
  Matrix g = m.data.transpose() * m.data;
  g = sym(g);
  Vector ev = sorted_eigenvalues(g);
  return OverlapGram{std::move(g), std::move(ev)};
}

}  // namespace stpca
