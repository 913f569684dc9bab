#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stpca/manifold.hpp"

namespace stpca {

struct Event {
  std::string name;
  double time = 0.0;
};

/// Time series of correlation matrices produced by every engine.
struct Trajectory {
  std::vector<double> times;
  std::vector<Matrix> corr;
  std::vector<Vector> gram_eigs;  // decreasing
  std::vector<Event> events;
  std::optional<StiefelPoint> final_x;

  std::size_t stride = 1;  // integrator steps between snapshots
  bool truncated = false;
  std::string note;

  // Diagnostics filled by the SGD engine.
  std::size_t neumann_violations = 0;
  double route_deviation = 0.0;
  double max_orthonormality_error = 0.0;

  /// Appends a snapshot; times must increase strictly.
  void record(double t, const Matrix& m);

  std::size_t size() const { return times.size(); }
  bool empty() const { return times.empty(); }
  const Matrix& final_corr() const { return corr.back(); }
};

/// First recorded time with |m_ij| >= level, if any.
std::optional<double> hitting_time(const Trajectory& traj, Eigen::Index i, Eigen::Index j,
                                   double level);

}  // namespace stpca
