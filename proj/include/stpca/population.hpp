#pragma once

// Noise-free dynamics of the correlations m_ij and of G = M^T M.

#include <vector>

#include "stpca/bounds.hpp"
#include "stpca/trajectory.hpp"

namespace stpca {

enum class CorrVariant {
  Full,       // drift plus the retraction correction
  DriftOnly,  // m_ij' = p lambda_i lambda_j m_ij^{p-1}
};

/// m_ij' = p l_i l_j m_ij^{p-1}
///         - (p/2) sum_{k,l} l_k m_il m_kj m_kl (l_j m_kj^{p-2} + l_l m_kl^{p-2})
Matrix corr_rhs(const Matrix& m, const Vector& lambdas, int p,
                CorrVariant variant = CorrVariant::Full);

struct IntegrateOptions {
  double dt = 1e-3;
  std::size_t record_every = 1;
  CorrVariant variant = CorrVariant::Full;
  double blowup_level = 1.0 + 1e-6;  // halt once some |m_ij| exceeds it
};

/// Fixed-step RK4 from M0 over [0, horizon]. Halts with `truncated` set
/// and a note on blow-up or non-finite state.
Trajectory integrate_corr(const Matrix& m0, const Vector& lambdas, int p, double horizon,
                          const IntegrateOptions& options = {});

/// G' = 4 lambda^2 G (I - G), symmetrized.
Matrix gram_rhs(const Matrix& g, double lambda);

struct GramTrajectory {
  std::vector<double> times;
  std::vector<Matrix> gram;
};

GramTrajectory integrate_gram(const Matrix& g0, double lambda, double horizon, double dt,
                              std::size_t record_every = 1);

/// Solution of m' = c p m^{p-1}: m0 (1 - c p (p-2) m0^{p-2} t)^{-1/(p-2)} for
/// p >= 3 and m0 exp(2 c t) for p = 2. Throws BlowUpError past the blow-up.
double closed_form_single(double m0, double c, int p, double t);

/// (c p (p-2) m0^{p-2})^{-1}; +inf for p = 2.
double single_blowup_time(double m0, double c, int p);

/// Exact solution of the full single-spike ODE m' = p lambda^2 m^{p-1}(1 - m^2)
/// for p in {2, 3}, 0 < m0 < 1.
double single_spike_exact(double m0, double lambda, int p, double t);

/// theta0 e^{rate t} / (1 + theta0 (e^{rate t} - 1))
double logistic(double theta0, double rate, double t);

enum class EscapeRegime { P3plus, P2 };

struct EscapeTimePrediction {
  double t_lower = 0.0;
  double t_upper = 0.0;
  EscapeRegime regime = EscapeRegime::P3plus;
};

struct EscapeParams {
  double delta = 0.0;
  double lambda_i = 1.0;
  double lambda_j = 1.0;
  double gamma = 1.0;  // initial correlation is gamma / sqrt(N)
  double n = 1.0;
  double eps = 0.5;
  double c0 = 0.0;  // in [0, 1)
};

/// Bracket of the hitting time of {m_ij >= eps} for the discrete growth
/// recursion with band (1 -+ c0). `form` selects the Bihari envelope for p >= 3.
EscapeTimePrediction escape_time_bounds(EscapeRegime regime, int p, const EscapeParams& params,
                                        BihariForm form = BihariForm::Corrected);

/// Continuous eigenvalue tracks: row k holds the eigenvalues of step k in
/// track order. Tracks follow eigenvectors, so they may cross.
Matrix eigen_track(const std::vector<Matrix>& grams);

}  // namespace stpca
