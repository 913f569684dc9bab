#include "stpca/bounds.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "stpca/errors.hpp"
#include "stpca/model.hpp"

namespace stpca {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double logistic_envelope(double a, double rate, double t) {
  const double odds = a / (1.0 - a) * std::exp(rate * t);
  if (std::isinf(odds)) return 1.0;
  return odds / (1.0 + odds);
}

// Orthonormal basis of the tangent space under the chosen metric.
std::vector<Matrix> tangent_basis(const StiefelPoint& x, LaplacianMetric metric) {
  const Eigen::Index n = x.dim();
  const Eigen::Index r = x.rank();
  const double s2 = x.scale_sq();
  const Matrix q = x.data() / std::sqrt(s2);  // orthonormal columns
  // Complement of span(X) from a full QR.
  Eigen::HouseholderQR<Matrix> qr(q);
  const Matrix full = qr.householderQ() * Matrix::Identity(n, n);
  const Matrix perp = full.rightCols(n - r);

  std::vector<Matrix> basis;
  for (Eigen::Index k = 0; k < n - r; ++k)
    for (Eigen::Index j = 0; j < r; ++j) {
      Matrix e = Matrix::Zero(n, r);
      e.col(j) = perp.col(k);
      basis.push_back(std::move(e));
    }
  const double skew_norm = metric == LaplacianMetric::Canonical ? std::sqrt(s2)
                                                                 : std::sqrt(2.0 * s2);
  for (Eigen::Index a = 0; a < r; ++a)
    for (Eigen::Index b = a + 1; b < r; ++b) {
      Matrix omega = Matrix::Zero(r, r);
      omega(a, b) = 1.0;
      omega(b, a) = -1.0;
      basis.push_back(x.data() * omega / skew_norm);
    }
  return basis;
}

}  // namespace

void validate(const BoundParams& params) {
  if (!(params.a1 > 0.0) || !(params.a1 <= params.a2))
    throw InvalidArgument("bounds need 0 < a1 <= a2");
  if (!(params.b1 >= 0.0) || !(params.b1 <= params.b2))
    throw InvalidArgument("bounds need 0 <= b1 <= b2");
  if (params.p < 2) throw InvalidArgument("bounds need p >= 2");
}

Envelope discrete_gronwall_bounds(const BoundParams& params, long t) {
  validate(params);
  if (t < 0) throw InvalidArgument("discrete bounds need t >= 0");
  const double td = static_cast<double>(t);
  return {params.a1 * std::pow(1.0 + params.b1, td), params.a2 * std::pow(1.0 + params.b2, td)};
}

double discrete_bihari_blowup(const BoundParams& params, BihariForm form) {
  validate(params);
  if (params.p < 3) throw InvalidArgument("Bihari bounds need p >= 3");
  const int k = params.p - 2;
  const double factor = form == BihariForm::Corrected ? k : 1.0;
  const double rate = factor * params.b2 * ipow(params.a2, k);
  return rate > 0.0 ? 1.0 / rate : kInf;
}

Envelope discrete_bihari_bounds(const BoundParams& params, long t, std::optional<double> u_prev,
                                BihariForm form) {
  validate(params);
  if (params.p < 3) throw InvalidArgument("Bihari bounds need p >= 3");
  if (t < 0) throw InvalidArgument("discrete bounds need t >= 0");
  const int k = params.p - 2;
  const double td = static_cast<double>(t);
  const double t_star = discrete_bihari_blowup(params, form);
  if (td >= t_star) {
    std::ostringstream os;
    os << "Bihari upper bound blows up at t* = " << t_star << " (t = " << t << ")";
    throw BlowUpError(os.str(), t_star);
  }
  const double factor = form == BihariForm::Corrected ? k : 1.0;
  const double upper =
      params.a2 * std::pow(1.0 - factor * params.b2 * ipow(params.a2, k) * td, -1.0 / k);

  double b_low = params.b1;
  if (t > 0 && u_prev)
    b_low = params.b1 / ipow(1.0 + params.b1 * ipow(*u_prev, k), params.p - 1);
  const double bracket = 1.0 - b_low * ipow(params.a1, k) * td;
  const double lower = bracket > 0.0 ? params.a1 * std::pow(bracket, -1.0 / k) : kInf;
  return {lower, upper};
}

Envelope discrete_logistic_bounds(const BoundParams& params, long t) {
  validate(params);
  if (!(params.a2 < 0.5)) throw InvalidArgument("logistic bounds need a2 < 1/2");
  if (t < 0) throw InvalidArgument("discrete bounds need t >= 0");
  const double td = static_cast<double>(t);
  return {logistic_envelope(params.a1, params.b1 / (1.0 + params.b1), td),
          logistic_envelope(params.a2, params.b2, td)};
}

long logistic_validity_ceiling(const BoundParams& params) {
  validate(params);
  if (params.b2 <= 0.0) return std::numeric_limits<long>::max();
  // upper > 1/2  <=>  log(a2/(1-a2)) + b2 t > 0
  const double t = -std::log(params.a2 / (1.0 - params.a2)) / params.b2;
  long first = static_cast<long>(std::floor(t)) + 1;
  while (first > 0 && discrete_logistic_bounds(params, first - 1).upper > 0.5) --first;
  return first;
}

double blowup_time(double a, double c, double gamma) {
  if (!(a > 0.0) || !(c > 0.0) || !(gamma >= 1.0))
    throw InvalidArgument("blowup_time needs a, c > 0 and gamma >= 1");
  if (gamma == 1.0) return kInf;
  return 1.0 / ((gamma - 1.0) * c * std::pow(a, gamma - 1.0));
}

double continuous_bihari(double a, double c, double gamma, double t) {
  const double t_star = blowup_time(a, c, gamma);
  if (gamma == 1.0) return a * std::exp(c * t);
  if (t >= t_star) {
    std::ostringstream os;
    os << "continuous Bihari solution blows up at t* = " << t_star;
    throw BlowUpError(os.str(), t_star);
  }
  return a * std::pow(1.0 - t / t_star, -1.0 / (gamma - 1.0));
}

RecursionReport verify_recursion_bounds(std::span<const double> sequence,
                                        const BoundParams& params, RecursionKind kind,
                                        BihariForm form) {
  validate(params);
  RecursionReport report;
  for (std::size_t t = 0; t < sequence.size(); ++t) {
    const double u = sequence[t];
    const long tl = static_cast<long>(t);
    Envelope env;
    if (kind == RecursionKind::Gronwall) {
      env = discrete_gronwall_bounds(params, tl);
    } else if (kind == RecursionKind::Bihari) {
      if (static_cast<double>(t) >= discrete_bihari_blowup(params, form)) break;
      std::optional<double> prev;
      if (t > 0) prev = sequence[t - 1];
      env = discrete_bihari_bounds(params, tl, prev, form);
    } else {
      env = discrete_logistic_bounds(params, tl);
    }
    ++report.checked;
    if (!(u >= env.lower && u <= env.upper)) {
      report.ok = false;
      report.first_violation = tl;
      report.value = u;
      report.envelope = env;
      return report;
    }
    if (kind == RecursionKind::Logistic && u >= 0.5) break;
  }
  return report;
}

double laplacian_mij(const StiefelPoint& x, const StiefelPoint& v, Eigen::Index i,
                     Eigen::Index j, LaplacianMetric metric) {
  if (x.scale() != Scale::SqrtN) throw ConventionError("laplacian_mij expects sqrt(N) scale");
  const CorrelationMatrix m = correlation_matrix(v, x);
  const double n = static_cast<double>(x.dim());
  const double r = static_cast<double>(x.rank());
  const double factor = metric == LaplacianMetric::Canonical ? n - 1.0 : n - 0.5 * (r + 1.0);
  return -factor / n * m(i, j);
}

double laplacian_mij_fd(const StiefelPoint& x, const StiefelPoint& v, Eigen::Index i,
                        Eigen::Index j, LaplacianMetric metric, double h) {
  if (x.scale() != Scale::SqrtN) throw ConventionError("laplacian_mij_fd expects sqrt(N) scale");
  const auto mij = [&](const StiefelPoint& y) { return correlation_matrix(v, y)(i, j); };
  const double centre = mij(x);
  double total = 0.0;
  for (const Matrix& e : tangent_basis(x, metric)) {
    const double plus = mij(polar_retract(x, TangentVector{h * e}));
    const double minus = mij(polar_retract(x, TangentVector{-h * e}));
    total += (plus - 2.0 * centre + minus) / (h * h);
  }
  return total;
}

}  // namespace stpca
