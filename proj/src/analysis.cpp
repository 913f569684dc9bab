#include "stpca/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <tuple>

#include "stpca/dynamics.hpp"
#include "stpca/errors.hpp"

namespace stpca {

Matrix init_matrix_I0(const Matrix& m0, const Vector& lambdas, int p) {
  if (m0.rows() != m0.cols() || lambdas.size() != m0.rows())
    throw DimensionError("init_matrix_I0: need an r x r matrix and r weights");
  if (p < 2) throw InvalidArgument("tensor order p must be >= 2");
  const Eigen::Index r = m0.rows();
  Matrix out(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      const double power = ipow(m0(i, j), p - 2);
      out(i, j) = power >= 0.0 ? lambdas(i) * lambdas(j) * power : 0.0;
    }
  return out;
}

SelectionResult greedy_max_selection(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("greedy selection needs a square matrix");
  const Eigen::Index r = a.rows();
  std::vector<bool> row_used(static_cast<std::size_t>(r), false);
  std::vector<bool> col_used(static_cast<std::size_t>(r), false);
  SelectionResult out;
  for (Eigen::Index step = 0; step < r; ++step) {
    double best = -1.0;
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        if (!row_used[i] && !col_used[j]) best = std::max(best, std::abs(a(i, j)));
    IndexPair pick{-1, -1};
    for (Eigen::Index i = 0; i < r && pick.first < 0; ++i)
      for (Eigen::Index j = 0; j < r; ++j)
        if (!row_used[i] && !col_used[j] && std::abs(a(i, j)) >= best - kTieTolerance) {
          pick = {i, j};
          break;
        }
    row_used[pick.first] = true;
    col_used[pick.second] = true;
    out.pairs.push_back(pick);
    out.values.push_back(std::abs(a(pick.first, pick.second)));
  }
  return out;
}

EliminationReport detect_sequential_elimination(const Trajectory& traj, double eps,
                                                double eps_prime) {
  if (traj.empty()) throw InvalidArgument("sequential elimination needs a non-empty trajectory");
  if (!(eps > 0.0 && eps < 1.0) || !(eps_prime > 0.0 && eps_prime <= 1.0))
    throw InvalidArgument("sequential elimination needs 0 < eps < 1 and 0 < eps' <= 1");
  const Eigen::Index r = traj.corr.front().rows();
  const std::size_t len = traj.size();
  EliminationReport report;
  report.stride = traj.stride;

  const auto holds = [&](const Matrix& m, Eigen::Index i, Eigen::Index j) {
    if (std::abs(m(i, j)) < 1.0 - eps) return false;
    for (Eigen::Index k = 0; k < r; ++k) {
      if (k != j && std::abs(m(i, k)) > eps_prime) return false;
      if (k != i && std::abs(m(k, j)) > eps_prime) return false;
    }
    return true;
  };

  // (first persistent snapshot, i, j)
  std::vector<std::tuple<std::size_t, Eigen::Index, Eigen::Index>> candidates;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) {
      std::size_t first = len;
      for (std::size_t k = len; k-- > 0;) {
        if (!holds(traj.corr[k], i, j)) break;
        first = k;
      }
      if (first < len) candidates.emplace_back(first, i, j);
    }
  std::sort(candidates.begin(), candidates.end());
  std::vector<bool> row_used(static_cast<std::size_t>(r), false);
  std::vector<bool> col_used(static_cast<std::size_t>(r), false);
  for (const auto& [k, i, j] : candidates) {
    if (row_used[i] || col_used[j]) continue;
    row_used[i] = col_used[j] = true;
    report.ordering.emplace_back(i, j);
    report.stop_times.push_back(traj.times[k]);
  }
  report.satisfied = static_cast<Eigen::Index>(report.ordering.size()) == r;
  if (!report.satisfied) {
    const Matrix& last = traj.corr.back();
    for (Eigen::Index i = 0; i < r; ++i) {
      if (row_used[i]) continue;
      Eigen::Index j = 0;
      last.row(i).cwiseAbs().maxCoeff(&j);
      std::ostringstream os;
      os << "row " << i + 1 << ": no persistent pair; final max |m_" << i + 1 << j + 1
         << "| = " << std::abs(last(i, j));
      report.violations.push_back(os.str());
    }
  }
  return report;
}

bool exact_recovery(const Matrix& mf, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("recovery needs 0 < eps < 1");
  for (Eigen::Index i = 0; i < mf.rows(); ++i)
    if (std::abs(mf(i, i)) < 1.0 - eps) return false;
  return true;
}

std::optional<PermutationRecovery> permutation_recovery(const Matrix& mf, double eps) {
  if (!(eps > 0.0 && eps < 1.0)) throw InvalidArgument("recovery needs 0 < eps < 1");
  const Eigen::Index r = mf.cols();
  PermutationRecovery out;
  std::vector<bool> used(static_cast<std::size_t>(mf.rows()), false);
  for (Eigen::Index i = 0; i < r; ++i) {
    Eigen::Index row = 0;
    const double best = mf.col(i).cwiseAbs().maxCoeff(&row);
    if (best < 1.0 - eps || used[row]) return std::nullopt;
    used[row] = true;
    out.sigma.push_back(row);
    out.signs.push_back(mf(row, i) >= 0.0 ? 1 : -1);
  }
  return out;
}

SubspaceError subspace_error(const StiefelPoint& x, const StiefelPoint& v) {
  if (x.scale() != v.scale()) throw ConventionError("subspace_error: frames use different scales");
  if (x.dim() != v.dim() || x.rank() != v.rank())
    throw DimensionError("subspace_error: frames have different shapes");
  const double s2 = x.scale_sq();
  const Matrix diff = x.data() * x.data().transpose() - v.data() * v.data().transpose();
  const OverlapGram g = overlap_gram(correlation_matrix(v, x));
  SubspaceError out;
  out.frob_sq = diff.squaredNorm() / (s2 * s2);
  out.trace_gap = 2.0 * (static_cast<double>(x.rank()) - g.gram.trace());
  return out;
}

void validate(const ConditionParams& params) {
  if (!(params.gamma1 > params.gamma2 && params.gamma2 > 0.0))
    throw InvalidArgument("conditions need gamma1 > gamma2 > 0");
  if (!(params.gamma1 > params.gamma && params.gamma > 0.0))
    throw InvalidArgument("conditions need gamma1 > gamma > 0");
  if (!(params.gamma0 > 0.0)) throw InvalidArgument("conditions need gamma0 > 0");
}

ConditionReport check_condition1(const StiefelPoint& x, const StiefelPoint& v,
                                 const ConditionParams& params, SignMode mode) {
  validate(params);
  const Matrix m = correlation_matrix(v, x).data;
  const double sqrt_n = std::sqrt(static_cast<double>(x.dim()));
  ConditionReport report;
  report.statistic = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double value = sqrt_n * (mode == SignMode::Absolute ? std::abs(m(i, j)) : m(i, j));
      report.statistic = std::min(report.statistic, value);
      if (!(value >= params.gamma2 && value < params.gamma1)) {
        report.ok = false;
        report.offending.emplace_back(i, j);
      }
    }
  return report;
}

ConditionReport check_condition2(const StiefelPoint& x, const StiefelPoint& v,
                                 const Vector& lambdas, int p, const ConditionParams& params) {
  validate(params);
  if (p < 3) throw InvalidArgument("Condition 2 needs p >= 3");
  const Matrix m = correlation_matrix(v, x).data;
  const Eigen::Index r = m.rows();
  if (lambdas.size() != r) throw DimensionError("Condition 2: need r weights");
  Matrix prod(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      prod(i, j) = lambdas(i) * lambdas(j) * ipow(m(i, j), p - 2);
  ConditionReport report;
  report.statistic = std::numeric_limits<double>::infinity();
  const double threshold = params.gamma / params.gamma1;
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      for (Eigen::Index k = 0; k < r; ++k)
        for (Eigen::Index l = 0; l < r; ++l) {
          if (i == k && j == l) continue;
          double sep = 0.0;  // zero denominator counts as failure
          if (prod(k, l) != 0.0) sep = std::abs(prod(i, j) / prod(k, l) - 1.0);
          report.statistic = std::min(report.statistic, sep);
          if (!(sep > threshold)) {
            report.ok = false;
            if (std::find(report.offending.begin(), report.offending.end(), IndexPair{i, j}) ==
                report.offending.end())
              report.offending.emplace_back(i, j);
          }
        }
  if (r == 1) report.statistic = 0.0;
  return report;
}

ConditionReport check_condition0_level1(const StiefelPoint& x, const NoiseTensor& w,
                                        const SpikedModel& model, double m_samples,
                                        double beta, const ConditionParams& params) {
  validate(params);
  if (params.n_level != 1) throw InvalidArgument("Condition 0 is supported at level 1 only");
  const Generator gen = generator_mij(x, w, model, beta, m_samples);
  const double sqrt_n = std::sqrt(static_cast<double>(x.dim()));
  ConditionReport report;
  const Matrix scaled = sqrt_n * gen.noise.cwiseAbs();
  report.statistic = scaled.maxCoeff();
  for (Eigen::Index i = 0; i < scaled.rows(); ++i)
    for (Eigen::Index j = 0; j < scaled.cols(); ++j)
      if (!(scaled(i, j) <= params.gamma0)) {
        report.ok = false;
        report.offending.emplace_back(i, j);
      }
  return report;
}

}  // namespace stpca
