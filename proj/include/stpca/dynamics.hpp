#pragma once

// Online SGD on St(N,r), gradient flow and Langevin dynamics on the sqrt(N)
// Stiefel manifold, and the generator of m_ij used to cross-check them.

#include <cstdint>
#include <limits>
#include <optional>

#include "stpca/bounds.hpp"
#include "stpca/model.hpp"
#include "stpca/trajectory.hpp"

namespace stpca {

inline constexpr double kInfiniteBeta = std::numeric_limits<double>::infinity();

/// max(1, steps / 2000)
std::size_t default_stride(std::size_t steps);

struct SgdConfig {
  double delta = 0.0;
  std::size_t steps = 0;  // one fresh noise tensor per step
  GradMode grad_mode = GradMode::Exact;
  NoiseSpec noise;
  std::size_t record_every = 0;  // 0 selects default_stride(steps)
};

void validate(const SgdConfig& cfg);

struct SgdStep {
  StiefelPoint x;
  double route_deviation = 0.0;  // ||polar route - P_t route||_F
  double neumann_level = 0.0;    // delta^2 ||G||_F / N^2, must stay < 1
};

/// X' = R_X(-(delta/N) grad_St L(X; Y)), evaluated both through polar_retract
/// and through (X - (delta/N) grad_St L) (I + delta^2/N^2 G)^{-1/2}.
SgdStep sgd_step(const StiefelPoint& x, const Observation& y, double delta,
                 GradMode mode = GradMode::Exact);

/// Noise tensor of step t (1-based) in a run seeded with `seed`.
std::uint64_t sgd_noise_seed(std::uint64_t seed, std::size_t step);

Trajectory sgd_run(const SpikedModel& model, const SgdConfig& cfg, const StiefelPoint& x0,
                   std::uint64_t seed);

enum class ScheduleRegime { TensorP3plus, MatrixSeparated, MatrixIsotropicMax, MatrixIsotropicMin };

struct ScheduleParams {
  double c_delta = 1.0;
  std::optional<double> d0;  // default 1 / log N
  double eps = 1.0;
  double gamma2 = 1.0;
};

double step_size_schedule(int p, Eigen::Index n, ScheduleRegime regime,
                          const ScheduleParams& params = {});

struct FlowConfig {
  double beta = kInfiniteBeta;
  double m_samples = 1.0;  // M; the noise enters with weight 1/sqrt(M)
  double dt = 1e-3;
  double horizon = 0.0;
  /// Follow the Hamiltonian H = sqrt(M) R, i.e. run in tau = t / sqrt(M).
  bool rescale_time = false;
  std::size_t record_every = 0;
  GradMode grad_mode = GradMode::Exact;
};

void validate(const FlowConfig& cfg);

/// polar_retract(X, dt * force)
StiefelPoint flow_step(const StiefelPoint& x, const TangentVector& force, double dt);

/// Explicit Euler in the tangent space followed by polar retraction, with
/// the force -grad R (or -grad H when rescale_time is set).
Trajectory gradient_flow_run(const SpikedModel& model, const NoiseTensor& w,
                             const FlowConfig& cfg, const StiefelPoint& x0);

/// X' = R_X(-beta grad H h + sqrt(2h) xi_tan). beta = inf runs the gradient
/// flow of H instead.
Trajectory langevin_run(const SpikedModel& model, const NoiseTensor& w, const FlowConfig& cfg,
                        const StiefelPoint& x0, std::uint64_t seed);

struct Generator {
  Matrix total;       // L m_ij
  Matrix noise;       // L_0 m_ij (Laplacian plus H_0 part)
  Matrix population;  // signal part
};

/// Generator of m_ij. For finite beta:
///   L m = Lap m - beta <grad H_0, grad m> + beta sqrt(M) corr_rhs(M).
/// For beta = inf, the drift of m_ij under the gradient flow of R:
///   -(1/sqrt(M)) <grad H_0, grad m> + corr_rhs(M), times sqrt(M) when
///   `rescale_time` is set.
Generator generator_mij(const StiefelPoint& x, const NoiseTensor& w, const SpikedModel& model,
                        double beta, double m_samples, bool rescale_time = false,
                        LaplacianMetric metric = LaplacianMetric::Canonical);

}  // namespace stpca
