#pragma once

// Geometry of the Stiefel manifold in the two normalizations used here:
//   Scale::Unit   St(N,r)  = { X : X^T X = I_r }
//   Scale::SqrtN  M_{N,r}  = { X : X^T X = N I_r }
// Every operation branches on scale^2 in {1, N}.

#include <Eigen/Dense>

#include "stpca/rng.hpp"

namespace stpca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Scale { Unit, SqrtN };

const char* to_string(Scale scale);

/// Tolerance of the hard Stiefel invariant ||X^T X / scale^2 - I||_F.
inline constexpr double kStiefelTol = 1e-10;
/// Tolerance after many retraction steps.
inline constexpr double kDriftTol = 1e-8;

class StiefelPoint {
 public:
  /// Validates N >= r >= 1 and the orthonormality invariant to `tol`.
  StiefelPoint(Matrix data, Scale scale, double tol = kStiefelTol);

  /// Skips the orthonormality check (dimension checks still apply). Used by
  /// integrators that monitor drift themselves.
  static StiefelPoint unchecked(Matrix data, Scale scale);

  const Matrix& data() const { return data_; }
  Scale scale() const { return scale_; }
  Eigen::Index dim() const { return data_.rows(); }
  Eigen::Index rank() const { return data_.cols(); }
  double scale_sq() const;
  auto column(Eigen::Index j) const { return data_.col(j); }

  /// ||X^T X / scale^2 - I||_F
  double orthonormality_error() const;

  /// Same frame under the other normalization.
  StiefelPoint rescaled(Scale target) const;

 private:
  StiefelPoint(Matrix data, Scale scale, std::nullptr_t);

  Matrix data_;
  Scale scale_;
};

double scale_sq(Scale scale, Eigen::Index n);

/// Element of the tangent space T_X. Produced by project_tangent or
/// riemannian_gradient; `tangent_at` constructs one from raw data after
/// checking X^T U + U^T X = 0.
struct TangentVector {
  Matrix data;

  static TangentVector tangent_at(const StiefelPoint& x, Matrix u,
                                  double tol = kStiefelTol);
};

/// ||X^T U + U^T X||_F, normalized by scale^2.
double tangency_error(const StiefelPoint& x, const Matrix& u);

/// M_ij = <v_i, x_j> / scale^2.
struct CorrelationMatrix {
  Matrix data;
  double operator()(Eigen::Index i, Eigen::Index j) const { return data(i, j); }
  Eigen::Index rank() const { return data.rows(); }
};

/// G = M^T M with eigenvalues sorted in decreasing order.
struct OverlapGram {
  Matrix gram;
  Vector eigenvalues;
};

/// Haar sample through X = Z (Z^T Z / scale^2)^{-1/2}, Z with iid N(0,1)
/// entries.
StiefelPoint sample_invariant(Eigen::Index n, Eigen::Index r, Scale scale,
                              rng::Stream& stream);

/// A - X sym(X^T A) / scale^2
TangentVector project_tangent(const StiefelPoint& x, const Matrix& a);

/// g - X (X^T g + g^T X) / (2 scale^2)
TangentVector riemannian_gradient(const StiefelPoint& x, const Matrix& g);

/// (X + U)(I + U^T U / scale^2)^{-1/2}, computed as the polar factor of X + U.
StiefelPoint polar_retract(const StiefelPoint& x, const TangentVector& u);

/// Symmetric T with T S T = I, via the eigendecomposition of S.
Matrix inv_sqrt_psd(const Matrix& s);

CorrelationMatrix correlation_matrix(const StiefelPoint& v, const StiefelPoint& x);

OverlapGram overlap_gram(const CorrelationMatrix& m);

/// Symmetric eigenvalues in decreasing order.
Vector sorted_eigenvalues(const Matrix& symmetric);

}  // namespace stpca
