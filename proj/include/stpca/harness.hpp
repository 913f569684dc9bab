#pragma once

// Trial execution, sweeps over (N, step budget), threshold estimation and
// the CSV / JSON result formats.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "stpca/analysis.hpp"
#include "stpca/dynamics.hpp"
#include "stpca/population.hpp"

namespace stpca {

const char* version();

enum class DynamicsKind { Sgd, GradientFlow, Langevin, Population };
enum class SuccessCriterion { Exact, Permutation, Subspace };

const char* to_string(DynamicsKind kind);

struct ModelSpec {
  Eigen::Index n = 32;
  Eigen::Index r = 1;
  int p = 3;
  Vector lambdas = Vector::Ones(1);
  NoiseSpec noise;
  double signal_scale = 1.0;
  std::size_t memory_budget = kDefaultMemoryBudget;
};

struct SgdSpec {
  std::optional<double> delta;  // absent: from the schedule
  ScheduleRegime schedule = ScheduleRegime::TensorP3plus;
  ScheduleParams schedule_params;
  std::size_t steps = 0;
  GradMode grad_mode = GradMode::Exact;
  std::size_t record_every = 0;
};

struct FlowSpec {
  FlowConfig cfg;
  bool noise_enabled = true;
};

struct PopulationSpec {
  std::optional<Matrix> m0;  // absent: uniform entries in [init_low, init_high]
  double init_low = 0.005;
  double init_high = 0.015;
  double horizon = 10.0;
  double dt = 1e-3;
  std::size_t record_every = 0;
  CorrVariant variant = CorrVariant::Full;
};

struct RecoveryParams {
  double eps = 0.1;
  double eps_prime = 0.1;
  SuccessCriterion criterion = SuccessCriterion::Permutation;
  std::vector<double> thresholds{0.5, 0.9};
};

struct TrialConfig {
  ModelSpec model;
  DynamicsKind dynamics = DynamicsKind::Sgd;
  SgdSpec sgd;
  FlowSpec flow;
  PopulationSpec population;
  RecoveryParams recovery;
  ConditionParams conditions;
  SignMode condition1_sign = SignMode::Absolute;
  std::uint64_t seed = 1;
  bool keep_trajectory = false;
  bool deterministic = false;  // zero wall-clock fields
  std::string config_hash;
  std::size_t cell_id = 0;
  double budget_exponent = std::nan("");
};

struct TrialRecord {
  std::string config_hash;
  std::size_t cell_id = 0;
  std::uint64_t seed = 0;
  Eigen::Index n = 0, r = 0;
  int p = 0;
  Vector lambdas;
  DynamicsKind dynamics = DynamicsKind::Sgd;
  double budget_exponent = std::nan("");
  std::size_t steps = 0;
  double delta = std::nan("");

  bool exact = false;
  std::optional<PermutationRecovery> permutation;
  bool success = false;
  EliminationReport elimination;
  std::vector<IndexPair> greedy_ordering;    // greedy_max_selection(I0)
  std::vector<IndexPair> recovery_ordering;  // recovered pairs by hitting time
  bool ordering_matches = false;
  std::map<std::string, double> hitting_times;  // NaN when never hit
  double subspace_err = std::nan("");
  std::map<std::string, bool> condition_flags;
  std::size_t neumann_violations = 0;
  double route_deviation = 0.0;
  double wall_seconds = 0.0;
  bool truncated = false;
  std::string note;
  std::string error;  // non-empty when the trial failed

  std::optional<Trajectory> trajectory;
};

/// Seed for trial `trial` of cell `cell`.
std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, std::size_t trial);

TrialRecord run_trial(const TrialConfig& cfg);

/// Step count c N^alpha (Power) or c log^2 N (LogSquared).
enum class BudgetKind { Power, LogSquared };

struct SweepSpec {
  std::vector<Eigen::Index> ns{16};
  std::vector<double> alphas{1.0};
  BudgetKind budget = BudgetKind::Power;
  double budget_c = 1.0;
  std::size_t trials = 10;
  std::uint64_t master_seed = 1;
  std::size_t workers = 0;  // 0: STPCA_WORKERS or hardware concurrency
  double flop_limit = 1e12;
};

struct SweepCell {
  std::size_t cell_id = 0;
  Eigen::Index n = 0;
  double alpha = std::nan("");
  std::size_t steps = 0;
};

std::vector<SweepCell> sweep_cells(const SweepSpec& sweep);

/// N^p r per step (the streamed tensor has N^p entries) times steps times trials.
double estimate_flops(const TrialConfig& base, const SweepSpec& sweep);

struct Interval {
  double lower = 0.0;
  double upper = 1.0;
};

/// Wilson score interval at z = 1.96.
Interval wilson_interval(std::size_t successes, std::size_t trials, double z = 1.96);

struct CellSummary {
  SweepCell cell;
  std::size_t trials = 0;
  std::size_t successes = 0;
  std::size_t failures = 0;  // trials that raised errors
  double fraction = 0.0;
  Interval ci;
};

struct ThresholdFit {
  Eigen::Index n = 0;
  double alpha0 = std::nan("");
  Interval alpha0_ci{std::nan(""), std::nan("")};
  double slope = std::nan("");
  std::string flag;  // "", "below_grid", "above_grid", "unreliable", "insufficient"
};

struct ThresholdEstimate {
  std::vector<ThresholdFit> per_n;
  double slope_vs_log_n = std::nan("");
  bool reliable = true;
};

struct SweepSummary {
  std::vector<CellSummary> cells;
  std::vector<TrialRecord> records;  // ordered by (cell_id, seed)
  std::size_t skipped = 0;           // trials taken from an existing CSV
};

struct SweepOptions {
  std::string csv_path;  // empty: no file
  bool resume = true;
  bool deterministic = false;
};

/// Runs every missing (cell, trial) on a worker pool. Rows already present
/// in `csv_path` are kept byte for byte.
SweepSummary run_sweep(const TrialConfig& base, const SweepSpec& sweep,
                       const SweepOptions& options = {});

SweepSummary summarize(const std::vector<SweepCell>& cells, const std::vector<TrialRecord>& records);

/// Per N, the 50% crossing of a monotone logistic fit in alpha.
ThresholdEstimate estimate_threshold(const std::vector<CellSummary>& cells);

// Serialization.

std::string csv_header(Eigen::Index r);
std::string csv_row(const TrialRecord& record);
/// Parses rows written by csv_row; used by resume and report.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> raw_rows;
};
CsvTable read_csv(const std::string& path);

std::string trial_json(const TrialRecord& record);
std::string threshold_json(const ThresholdEstimate& estimate, const std::string& config_hash);

/// %.17g
std::string format_double(double value);

std::size_t worker_count(std::size_t requested);

}  // namespace stpca
