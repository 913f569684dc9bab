#include "stpca/trajectory.hpp"

#include <cmath>

#include "stpca/errors.hpp"

namespace stpca {

void Trajectory::record(double t, const Matrix& m) {
  if (!times.empty() && !(t > times.back()))
    throw InvalidArgument("trajectory times must increase strictly");
  if (!corr.empty() && (m.rows() != corr.front().rows() || m.cols() != corr.front().cols()))
    throw DimensionError("trajectory snapshots must share one shape");
  times.push_back(t);
  corr.push_back(m);
  gram_eigs.push_back(overlap_gram(CorrelationMatrix{m}).eigenvalues);
}

std::optional<double> hitting_time(const Trajectory& traj, Eigen::Index i, Eigen::Index j,
                                   double level) {
  for (std::size_t k = 0; k < traj.size(); ++k)
    if (std::abs(traj.corr[k](i, j)) >= level) return traj.times[k];
  return std::nullopt;
}

}  // namespace stpca
