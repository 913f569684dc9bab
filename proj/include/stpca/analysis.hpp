#pragma once

// Recovery predicates, greedy maximum selection, sequential-elimination
// detection and the initial-data conditions.

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stpca/model.hpp"
#include "stpca/trajectory.hpp"

namespace stpca {

using IndexPair = std::pair<Eigen::Index, Eigen::Index>;

/// I0_ij = lambda_i lambda_j m_ij^{p-2} 1{m_ij^{p-2} >= 0}; lambda_i lambda_j for p = 2.
Matrix init_matrix_I0(const Matrix& m0, const Vector& lambdas, int p);

struct SelectionResult {
  std::vector<IndexPair> pairs;  // 0-based (row, column)
  std::vector<double> values;
};

inline constexpr double kTieTolerance = 1e-12;

/// Repeated argmax of |A_ij| over the surviving rows and columns. Entries
/// within kTieTolerance of the maximum go to the lexicographically smallest
/// (row, column).
SelectionResult greedy_max_selection(const Matrix& a);

struct EliminationReport {
  std::vector<IndexPair> ordering;
  std::vector<double> stop_times;
  bool satisfied = false;
  std::vector<std::string> violations;
  std::size_t stride = 1;
};

/// For each (i, j), T_ij is the first snapshot from which |m_ij| >= 1 - eps and
/// every other entry of row i and column j stays <= eps_prime until the end.
/// Pairs are taken by increasing T_ij while rows and columns stay free.
EliminationReport detect_sequential_elimination(const Trajectory& traj, double eps,
                                                double eps_prime);

bool exact_recovery(const Matrix& mf, double eps);

struct PermutationRecovery {
  std::vector<Eigen::Index> sigma;  // |m_{sigma(i), i}| >= 1 - eps
  std::vector<int> signs;           // sign of m_{sigma(i), i}
};

std::optional<PermutationRecovery> permutation_recovery(const Matrix& mf, double eps);

struct SubspaceError {
  double frob_sq = 0.0;    // ||X X^T - V V^T||_F^2 / scale^4
  double trace_gap = 0.0;  // 2 (r - Tr G)
};

SubspaceError subspace_error(const StiefelPoint& x, const StiefelPoint& v);

struct ConditionParams {
  double gamma0 = 1.0;
  double gamma1 = 3.0;
  double gamma2 = 0.05;
  double gamma = 0.1;
  int n_level = 1;
};

void validate(const ConditionParams& params);

enum class SignMode {
  Signed,    // gamma2/sqrt(N) <= m_ij < gamma1/sqrt(N)
  Absolute,  // same band for |m_ij|
};

struct ConditionReport {
  bool ok = true;
  std::vector<IndexPair> offending;
  double statistic = 0.0;  // condition-specific summary
};

/// statistic: min_ij sqrt(N) m_ij (or |m_ij|).
ConditionReport check_condition1(const StiefelPoint& x, const StiefelPoint& v,
                                 const ConditionParams& params,
                                 SignMode mode = SignMode::Signed);

/// Over quadruples with (i,j) != (k,l); statistic: smallest |ratio - 1|.
ConditionReport check_condition2(const StiefelPoint& x, const StiefelPoint& v,
                                 const Vector& lambdas, int p, const ConditionParams& params);

/// |L_0 m_ij| <= gamma0 / sqrt(N) with L_0 the noise part of the generator;
/// statistic: max sqrt(N) |L_0 m_ij|.
ConditionReport check_condition0_level1(const StiefelPoint& x, const NoiseTensor& w,
                                        const SpikedModel& model, double m_samples,
                                        double beta, const ConditionParams& params);

}  // namespace stpca
