#include "stpca/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stpca/errors.hpp"
#include "stpca/population.hpp"

namespace stpca {

namespace {

constexpr std::uint64_t kSgdDomain = 0x5347440000000000ULL;
constexpr std::uint64_t kLangevinDomain = 0x4C414E4700000000ULL;

std::size_t stride_or_default(std::size_t requested, std::size_t steps) {
  return requested > 0 ? requested : default_stride(steps);
}

void track_drift(Trajectory& traj, const StiefelPoint& x) {
  const double err = x.orthonormality_error();
  traj.max_orthonormality_error = std::max(traj.max_orthonormality_error, err);
  if (!(err <= kDriftTol)) {
    std::ostringstream os;
    os << "Stiefel invariant drifted to " << err;
    throw NumericError(os.str());
  }
}

std::size_t flow_steps(const FlowConfig& cfg) {
  if (cfg.dt == 0.0 || cfg.horizon == 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(cfg.horizon / cfg.dt - 1e-9));
}

}  // namespace

std::size_t default_stride(std::size_t steps) { return std::max<std::size_t>(1, steps / 2000); }

void validate(const SgdConfig& cfg) {
  if (!(cfg.delta >= 0.0) || !std::isfinite(cfg.delta))
    throw InvalidArgument("SGD step size must be finite and non-negative");
  validate(cfg.noise);
}

std::uint64_t sgd_noise_seed(std::uint64_t seed, std::size_t step) {
  return rng::derive_seed(seed, kSgdDomain, step);
}

SgdStep sgd_step(const StiefelPoint& x, const Observation& y, double delta, GradMode mode) {
  if (x.scale() != Scale::Unit) throw ConventionError("sgd_step expects a unit-scale frame");
  const double n = static_cast<double>(x.dim());
  const Matrix euclid = grad_loss(x, y, mode);
  if (!euclid.allFinite()) throw NumericError("sgd_step: non-finite gradient");
  const TangentVector grad = riemannian_gradient(x, euclid);
  const TangentVector step{-(delta / n) * grad.data};

  StiefelPoint polar = polar_retract(x, step);
  const Matrix gram = grad.data.transpose() * grad.data;
  const double scale = delta * delta / (n * n);
  const Eigen::Index r = x.rank();
  const Matrix p_t = inv_sqrt_psd(Matrix::Identity(r, r) + scale * gram);
  const Matrix via_p = (x.data() + step.data) * p_t;

  SgdStep out{std::move(polar), 0.0, scale * gram.norm()};
  out.route_deviation = (out.x.data() - via_p).norm();
  return out;
}

Trajectory sgd_run(const SpikedModel& model, const SgdConfig& cfg, const StiefelPoint& x0,
                   std::uint64_t seed) {
  validate(cfg);
  if (x0.scale() != Scale::Unit) throw ConventionError("sgd_run expects a unit-scale start");
  if (x0.dim() != model.n || x0.rank() != model.r)
    throw DimensionError("sgd_run: start frame does not match the model");
  Trajectory traj;
  traj.stride = stride_or_default(cfg.record_every, cfg.steps);
  traj.record(0.0, correlation_matrix(model.v, x0).data);
  StiefelPoint x = x0;
  for (std::size_t t = 1; t <= cfg.steps; ++t) {
    const NoiseTensor w = NoiseTensor::streamed(model.n, model.p, cfg.noise, sgd_noise_seed(seed, t));
    const Observation y(w, model);
    SgdStep step = sgd_step(x, y, cfg.delta, cfg.grad_mode);
    if (step.neumann_level >= 1.0) ++traj.neumann_violations;
    traj.route_deviation = std::max(traj.route_deviation, step.route_deviation);
    x = std::move(step.x);
    track_drift(traj, x);
    if (t % traj.stride == 0 || t == cfg.steps)
      traj.record(static_cast<double>(t), correlation_matrix(model.v, x).data);
  }
  traj.final_x = x;
  return traj;
}

double step_size_schedule(int p, Eigen::Index n, ScheduleRegime regime,
                          const ScheduleParams& params) {
  if (n < 3) throw InvalidArgument("step-size schedules need N >= 3");
  if (!(params.c_delta > 0.0)) throw InvalidArgument("C_delta must be positive");
  const double nd = static_cast<double>(n);
  const double d0 = params.d0.value_or(1.0 / std::log(nd));
  if (!(d0 > 0.0)) throw InvalidArgument("d0 must be positive");
  const double base = params.c_delta * d0;
  switch (regime) {
    case ScheduleRegime::TensorP3plus:
      if (p < 3) throw InvalidArgument("the tensor schedule needs p >= 3");
      return base * std::pow(nd, -0.5 * (p - 3));
    case ScheduleRegime::MatrixSeparated: {
      if (p != 2) throw InvalidArgument("matrix schedules need p = 2");
      if (!(params.eps > 0.0 && params.gamma2 > 0.0))
        throw InvalidArgument("eps and gamma2 must be positive");
      const double denom = std::log(2.0 * params.eps * std::sqrt(nd) / params.gamma2);
      if (!(denom > 0.0)) throw InvalidArgument("log(2 eps sqrt(N) / gamma2) must be positive");
      return base * std::sqrt(nd) / denom;
    }
    case ScheduleRegime::MatrixIsotropicMax:
      if (p != 2) throw InvalidArgument("matrix schedules need p = 2");
      return base * std::sqrt(nd) / std::log(std::log(nd));
    case ScheduleRegime::MatrixIsotropicMin: {
      if (p != 2) throw InvalidArgument("matrix schedules need p = 2");
      const double l = std::log(nd);
      return base * std::sqrt(nd) / (l * l);
    }
  }
  throw InvalidArgument("unknown schedule regime");
}

void validate(const FlowConfig& cfg) {
  if (!(cfg.dt >= 0.0) || !std::isfinite(cfg.dt)) throw InvalidArgument("dt must be >= 0");
  if (!(cfg.horizon >= 0.0) || !std::isfinite(cfg.horizon))
    throw InvalidArgument("horizon must be finite and >= 0");
  if (!(cfg.beta > 0.0)) throw InvalidArgument("beta must be positive (or infinite)");
  if (!(cfg.m_samples >= 1.0)) throw InvalidArgument("sample count M must be >= 1");
}

StiefelPoint flow_step(const StiefelPoint& x, const TangentVector& force, double dt) {
  return polar_retract(x, TangentVector{dt * force.data});
}

Trajectory gradient_flow_run(const SpikedModel& model, const NoiseTensor& w,
                             const FlowConfig& cfg, const StiefelPoint& x0) {
  validate(cfg);
  if (x0.scale() != Scale::SqrtN) throw ConventionError("gradient flow expects a sqrt(N)-scale start");
  const StiefelPoint v = model.v_sqrt_n();
  const std::size_t steps = flow_steps(cfg);
  const double speed = cfg.rescale_time ? std::sqrt(cfg.m_samples) : 1.0;
  Trajectory traj;
  traj.stride = stride_or_default(cfg.record_every, steps);
  traj.record(0.0, correlation_matrix(v, x0).data);
  StiefelPoint x = x0;
  double t = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(cfg.dt, cfg.horizon - t);
    TangentVector force = empirical_risk_force(x, w, model, cfg.m_samples);
    force.data *= speed;
    x = flow_step(x, force, h);
    track_drift(traj, x);
    t = s == steps ? cfg.horizon : t + h;
    if (s % traj.stride == 0 || s == steps) traj.record(t, correlation_matrix(v, x).data);
  }
  traj.final_x = x;
  return traj;
}

Trajectory langevin_run(const SpikedModel& model, const NoiseTensor& w, const FlowConfig& cfg,
                        const StiefelPoint& x0, std::uint64_t seed) {
  validate(cfg);
  if (std::isinf(cfg.beta)) {
    FlowConfig flow = cfg;
    flow.rescale_time = true;
    return gradient_flow_run(model, w, flow, x0);
  }
  if (x0.scale() != Scale::SqrtN) throw ConventionError("Langevin expects a sqrt(N)-scale start");
  const StiefelPoint v = model.v_sqrt_n();
  const std::size_t steps = flow_steps(cfg);
  const double drift_scale = cfg.beta * std::sqrt(cfg.m_samples);  // force of H = sqrt(M) R
  rng::Stream stream(seed, kLangevinDomain);
  Trajectory traj;
  traj.stride = stride_or_default(cfg.record_every, steps);
  traj.record(0.0, correlation_matrix(v, x0).data);
  StiefelPoint x = x0;
  Matrix xi(x0.dim(), x0.rank());
  double t = 0.0;
  for (std::size_t s = 1; s <= steps; ++s) {
    const double h = std::min(cfg.dt, cfg.horizon - t);
    const TangentVector force = empirical_risk_force(x, w, model, cfg.m_samples);
    for (Eigen::Index j = 0; j < xi.cols(); ++j)
      for (Eigen::Index i = 0; i < xi.rows(); ++i) xi(i, j) = stream.normal();
    const TangentVector noise = project_tangent(x, xi);
    x = polar_retract(x, TangentVector{drift_scale * h * force.data +
                                       std::sqrt(2.0 * h) * noise.data});
    track_drift(traj, x);
    t = s == steps ? cfg.horizon : t + h;
    if (s % traj.stride == 0 || s == steps) traj.record(t, correlation_matrix(v, x).data);
  }
  traj.final_x = x;
  return traj;
}

Generator generator_mij(const StiefelPoint& x, const NoiseTensor& w, const SpikedModel& model,
                        double beta, double m_samples, bool rescale_time,
                        LaplacianMetric metric) {
  if (x.scale() != Scale::SqrtN) throw ConventionError("generator_mij expects sqrt(N) scale");
  if (!(beta > 0.0)) throw InvalidArgument("beta must be positive (or infinite)");
  if (!(m_samples >= 1.0)) throw InvalidArgument("sample count M must be >= 1");
  const StiefelPoint v = model.v_sqrt_n();
  const Matrix m = correlation_matrix(v, x).data;
  const Eigen::Index r = model.r;
  const double n = static_cast<double>(model.n);
  const double sqrt_m = std::sqrt(m_samples);

  // <grad_M H_0, grad_M m_ij> = v_i^T (grad_M H_0)_j / N
  Matrix coupling = Matrix::Zero(r, r);
  if (w.backend() != NoiseTensor::Backend::Zero) {
    const TangentVector g = riemannian_gradient(x, grad_H0(w, x, model.lambdas));
    coupling = v.data().transpose() * g.data / n;
  }
  Generator out;
  out.population = model.signal_scale * corr_rhs(m, model.lambdas, model.p);
  if (std::isinf(beta)) {
    out.noise = -coupling / sqrt_m;
    out.total = out.noise + out.population;
    if (rescale_time) {
      out.noise *= sqrt_m;
      out.population *= sqrt_m;
      out.total *= sqrt_m;
    }
    return out;
  }
  Matrix lap(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j) lap(i, j) = laplacian_mij(x, v, i, j, metric);
  out.noise = lap - beta * coupling;
  out.population *= beta * sqrt_m;
  out.total = out.noise + out.population;
  return out;
}

}  // namespace stpca
