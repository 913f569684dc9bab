#include "stpca/population.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "stpca/errors.hpp"
#include "stpca/model.hpp"

namespace stpca {

namespace {

void check_square(const Matrix& m, const Vector& lambdas) {
  if (m.rows() != m.cols()) throw DimensionError("correlation matrix must be square");
  if (lambdas.size() != m.rows()) throw DimensionError("need one lambda per spike");
}

std::size_t step_count(double horizon, double dt) {
  if (!(dt > 0.0)) throw InvalidArgument("integrator step dt must be positive");
  if (!(horizon >= 0.0)) throw InvalidArgument("horizon must be non-negative");
  return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

template <class Rhs>
Matrix rk4(const Matrix& y, double h, Rhs&& f) {
  const Matrix k1 = f(y);
  const Matrix k2 = f(y + 0.5 * h * k1);
  const Matrix k3 = f(y + 0.5 * h * k2);
  const Matrix k4 = f(y + h * k3);
  return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double atanh_antiderivative(double m) { return -1.0 / m + std::atanh(m); }

}  // namespace

Matrix corr_rhs(const Matrix& m, const Vector& lambdas, int p, CorrVariant variant) {
  check_square(m, lambdas);
  if (p < 2) throw InvalidArgument("tensor order p must be >= 2");
  const Eigen::Index r = m.rows();
  Matrix out(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      out(i, j) = p * lambdas(i) * lambdas(j) * ipow(m(i, j), p - 1);
  if (variant == CorrVariant::DriftOnly) return out;

  // mp2(k, l) = m_kl^{p-2}
  Matrix mp2(r, r);
  for (Eigen::Index k = 0; k < r; ++k)
    for (Eigen::Index l = 0; l < r; ++l) mp2(k, l) = ipow(m(k, l), p - 2);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      double s = 0.0;
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index l = 0; l < r; ++l)
          s += lambdas(k) * m(i, l) * m(k, j) * m(k, l) *
               (lambdas(j) * mp2(k, j) + lambdas(l) * mp2(k, l));
      out(i, j) -= 0.5 * p * s;
    }
  return out;
}

Trajectory integrate_corr(const Matrix& m0, const Vector& lambdas, int p, double horizon,
                          const IntegrateOptions& options) {
  check_square(m0, lambdas);
  const std::size_t steps = step_count(horizon, options.dt);
  const std::size_t every = std::max<std::size_t>(1, options.record_every);
  Trajectory traj;
  traj.stride = every;
  traj.record(0.0, m0);
  const auto rhs = [&](const Matrix& y) { return corr_rhs(y, lambdas, p, options.variant); };
  Matrix m = m0;
  double t = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(options.dt, horizon - t);
    const Matrix next = rk4(m, h, rhs);
    const double t_next = s == steps ? horizon : t + h;
    const double peak = next.cwiseAbs().maxCoeff();
    if (!next.allFinite() || peak > options.blowup_level) {
      std::ostringstream os;
      os << "integration halted at t = " << t << ": max |m_ij| reached " << peak
         << " (level " << options.blowup_level << ")";
      traj.truncated = true;
      traj.note = os.str();
      traj.events.push_back({"blowup", t_next});
      if (traj.times.back() < t) traj.record(t, m);
      return traj;
    }
    m = next;
    t = t_next;
    if (s % every == 0 || s == steps) traj.record(t, m);
  }
  return traj;
}

Matrix gram_rhs(const Matrix& g, double lambda) {
  if (g.rows() != g.cols()) throw DimensionError("Gram matrix must be square");
  const Matrix sym = 0.5 * (g + g.transpose());
  Matrix out = 4.0 * lambda * lambda * (sym - sym * sym);
  return 0.5 * (out + out.transpose());
}

GramTrajectory integrate_gram(const Matrix& g0, double lambda, double horizon, double dt,
                              std::size_t record_every) {
  if (g0.rows() != g0.cols()) throw DimensionError("Gram matrix must be square");
  const std::size_t steps = step_count(horizon, dt);
  const std::size_t every = std::max<std::size_t>(1, record_every);
  GramTrajectory out;
  Matrix g = 0.5 * (g0 + g0.transpose());
  out.times.push_back(0.0);
  out.gram.push_back(g);
  const auto rhs = [&](const Matrix& y) { return gram_rhs(y, lambda); };
  double t = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(dt, horizon - t);
    g = rk4(g, h, rhs);
    g = 0.5 * (g + g.transpose());
    if (!g.allFinite()) throw NumericError("Gram integration produced non-finite values");
    t = s == steps ? horizon : t + h;
    if (s % every == 0 || s == steps) {
      out.times.push_back(t);
      out.gram.push_back(g);
    }
  }
  return out;
}

double single_blowup_time(double m0, double c, int p) {
  if (!(m0 > 0.0) || !(c > 0.0)) throw InvalidArgument("closed form needs m0 > 0 and c > 0");
  if (p < 2) throw InvalidArgument("tensor order p must be >= 2");
  if (p == 2) return std::numeric_limits<double>::infinity();
  return 1.0 / (c * p * (p - 2) * ipow(m0, p - 2));
}

double closed_form_single(double m0, double c, int p, double t) {
  const double t_star = single_blowup_time(m0, c, p);
  if (!(t >= 0.0)) throw InvalidArgument("closed form needs t >= 0");
  if (p == 2) return m0 * std::exp(2.0 * c * t);
  if (t >= t_star) {
    std::ostringstream os;
    os << "closed form blows up at t* = " << t_star;
    throw BlowUpError(os.str(), t_star);
  }
  return m0 * std::pow(1.0 - t / t_star, -1.0 / (p - 2));
}

double logistic(double theta0, double rate, double t) {
  const double e = std::exp(rate * t);
  return theta0 * e / (1.0 + theta0 * (e - 1.0));
}

double single_spike_exact(double m0, double lambda, int p, double t) {
  if (!(m0 > 0.0 && m0 < 1.0)) throw InvalidArgument("exact single-spike solution needs 0 < m0 < 1");
  if (p == 2) return std::sqrt(logistic(m0 * m0, 4.0 * lambda * lambda, t));
  if (p != 3) throw InvalidArgument("exact single-spike solution is available for p = 2, 3");
  // t = (F(m) - F(m0)) / (3 lambda^2) with F(m) = -1/m + atanh(m)
  const double target = atanh_antiderivative(m0) + 3.0 * lambda * lambda * t;
  double lo = m0, hi = 1.0;
  for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (atanh_antiderivative(mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

EscapeTimePrediction escape_time_bounds(EscapeRegime regime, int p, const EscapeParams& e,
                                        BihariForm form) {
  if (!(e.c0 >= 0.0 && e.c0 < 1.0)) throw InvalidArgument("escape times need 0 <= c0 < 1");
  if (!(e.delta > 0.0 && e.lambda_i > 0.0 && e.lambda_j > 0.0 && e.gamma > 0.0 && e.n > 0.0 &&
        e.eps > 0.0))
    throw InvalidArgument("escape-time parameters must be positive");
  const double sqrt_n = std::sqrt(e.n);
  if (e.eps * sqrt_n <= e.gamma)
    throw InvalidArgument("escape target eps*sqrt(N) must exceed the starting level gamma");
  const double ll = e.lambda_i * e.lambda_j;
  EscapeTimePrediction out;
  out.regime = regime;
  if (regime == EscapeRegime::P2) {
    if (p != 2) throw InvalidArgument("the p = 2 escape regime needs p = 2");
    const auto bound = [&](double s) {
      const double ratio = e.eps * sqrt_n / (s * e.gamma);
      if (ratio <= 1.0) return 0.0;
      return std::log(ratio) / std::log1p(2.0 * e.delta * s * ll / sqrt_n);
    };
    out.t_upper = bound(1.0 - e.c0);
    out.t_lower = bound(1.0 + e.c0);
  } else {
    if (p < 3) throw InvalidArgument("the p >= 3 escape regime needs p >= 3");
    const int k = p - 2;
    const double factor = form == BihariForm::Corrected ? k : 1.0;
    const auto bound = [&](double s) {
      const double start = s * e.gamma / (e.eps * sqrt_n);
      if (start >= 1.0) return 0.0;
      return (1.0 - ipow(start, k)) /
             (factor * e.delta * ipow(s, p - 1) * p * ll * ipow(e.gamma, k)) *
             std::pow(e.n, 0.5 * (p - 1));
    };
    out.t_upper = bound(1.0 - e.c0);
    out.t_lower = bound(1.0 + e.c0);
  }
  return out;
}

Matrix eigen_track(const std::vector<Matrix>& grams) {
  if (grams.empty()) return Matrix(0, 0);
  const Eigen::Index r = grams.front().rows();
  Matrix tracks(static_cast<Eigen::Index>(grams.size()), r);
  // Column i of `basis` is the eigenvector currently followed by track i.
  const auto decompose = [](const Matrix& g) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()));
    if (eig.info() != Eigen::Success) throw NumericError("eigen_track: eigensolver failed");
    // Decreasing order.
    return std::make_pair(Vector(eig.eigenvalues().reverse()), Matrix(eig.eigenvectors().rowwise().reverse()));
  };
  auto [ev0, basis] = decompose(grams.front());
  tracks.row(0) = ev0.transpose();
  for (std::size_t k = 1; k < grams.size(); ++k) {
    const auto [ev, q] = decompose(grams[k]);
    const Eigen::Index row = static_cast<Eigen::Index>(k);
    double min_gap = std::numeric_limits<double>::infinity();
    for (Eigen::Index a = 0; a + 1 < r; ++a) min_gap = std::min(min_gap, ev(a) - ev(a + 1));
    if (min_gap < 1e-12) {
      tracks.row(row) = ev.transpose();
      basis = q;
      continue;
    }
    // Greedy assignment by largest |<previous vector, new vector>|.
    const Matrix overlap = (basis.transpose() * q).cwiseAbs();
    std::vector<bool> track_done(static_cast<std::size_t>(r), false), used(static_cast<std::size_t>(r), false);
    Matrix next(basis.rows(), r);
    for (Eigen::Index step = 0; step < r; ++step) {
      Eigen::Index bi = -1, ba = -1;
      for (Eigen::Index i = 0; i < r; ++i) {
        if (track_done[static_cast<std::size_t>(i)]) continue;
        for (Eigen::Index a = 0; a < r; ++a) {
          if (used[static_cast<std::size_t>(a)]) continue;
          if (bi < 0 || overlap(i, a) > overlap(bi, ba)) bi = i, ba = a;
        }
      }
      track_done[static_cast<std::size_t>(bi)] = true;
      used[static_cast<std::size_t>(ba)] = true;
      tracks(row, bi) = ev(ba);
      next.col(bi) = q.col(ba);
    }
    basis = next;
  }
  return tracks;
}

}  // namespace stpca
