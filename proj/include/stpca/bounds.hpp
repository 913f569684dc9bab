#pragma once

// Envelopes for the discrete growth recursions
//   u_t = a + b sum_{s<t} u_s^{p-1}        (Gronwall p = 2, Bihari p >= 3)
//   u_t = a + b sum_{s<t} u_s (1 - u_s)    (logistic)
// and their continuous counterparts.

#include <optional>
#include <span>
#include <string>
#include <utility>

#include "stpca/manifold.hpp"

namespace stpca {

struct BoundParams {
  double a1 = 0.0, a2 = 0.0;  // 0 < a1 <= a2
  double b1 = 0.0, b2 = 0.0;  // 0 <= b1 <= b2
  int p = 2;
};

void validate(const BoundParams& params);

struct Envelope {
  double lower = 0.0;
  double upper = 0.0;
};

/// Form of the Bihari upper envelope. `AsWritten` is a2(1 - b2 a2^{p-2} t)^{-1/(p-2)},
/// which undershoots the recursion for p >= 4; `Corrected` carries the (p-2)
/// factor of the matching ODE. Both coincide at p = 3.
enum class BihariForm { Corrected, AsWritten };

/// a1(1+b1)^t <= u_t <= a2(1+b2)^t.
Envelope discrete_gronwall_bounds(const BoundParams& params, long t);

/// Throws BlowUpError when t reaches the upper blow-up. With `u_prev` the
/// lower bound uses b1/(1 + b1 u_{t-1}^{p-2})^{p-1}; without it the plain
/// a1(1 - b1 a1^{p-2} t)^{-1/(p-2)} form is returned.
Envelope discrete_bihari_bounds(const BoundParams& params, long t,
                                std::optional<double> u_prev = std::nullopt,
                                BihariForm form = BihariForm::Corrected);

/// First integer t at which the upper Bihari envelope is undefined.
double discrete_bihari_blowup(const BoundParams& params,
                              BihariForm form = BihariForm::Corrected);

/// Logistic envelopes, lower at rate b1/(1+b1), upper at rate b2.
Envelope discrete_logistic_bounds(const BoundParams& params, long t);

/// First integer t where the upper logistic envelope exceeds 1/2.
long logistic_validity_ceiling(const BoundParams& params);

/// Solution of f' = c f^gamma, f(0) = a; exponential for gamma = 1.
double continuous_bihari(double a, double c, double gamma, double t);

/// ((gamma-1) c a^{gamma-1})^{-1}; +inf for gamma = 1.
double blowup_time(double a, double c, double gamma);

enum class RecursionKind { Gronwall, Bihari, Logistic };

struct RecursionReport {
  bool ok = true;
  std::optional<long> first_violation;
  double value = 0.0;
  Envelope envelope;
  long checked = 0;  // entries compared
};

/// Checks every u_t against its envelope. Bihari stops at the blow-up,
/// logistic at the first u_t >= 1/2 (inclusive).
RecursionReport verify_recursion_bounds(std::span<const double> sequence,
                                        const BoundParams& params, RecursionKind kind,
                                        BihariForm form = BihariForm::Corrected);

enum class LaplacianMetric {
  Canonical,  // -((N-1)/N) m_ij
  Embedded,   // -((N - (r+1)/2)/N) m_ij
};

/// Laplace-Beltrami operator of X -> m_ij(X) on the sqrt(N) Stiefel manifold.
double laplacian_mij(const StiefelPoint& x, const StiefelPoint& v, Eigen::Index i,
                     Eigen::Index j, LaplacianMetric metric = LaplacianMetric::Canonical);

/// Finite-difference Laplacian: sum over an orthonormal tangent basis of
/// second differences of m_ij along retraction curves.
double laplacian_mij_fd(const StiefelPoint& x, const StiefelPoint& v, Eigen::Index i,
                        Eigen::Index j, LaplacianMetric metric, double h = 1e-3);

}  // namespace stpca
