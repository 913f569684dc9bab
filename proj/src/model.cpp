#include "stpca/model.hpp"

#include <cmath>
#include <sstream>

#include "stpca/errors.hpp"

namespace stpca {

namespace {

constexpr std::uint64_t kNoiseDomain = 0x4E4F495345ULL;

std::uint64_t checked_pow(Eigen::Index n, int p) {
  std::uint64_t size = 1;
  for (int k = 0; k < p; ++k) {
    if (size > (~std::uint64_t{0}) / static_cast<std::uint64_t>(n))
      throw InvalidArgument("noise tensor size N^p overflows 64 bits");
    size *= static_cast<std::uint64_t>(n);
  }
  return size;
}

void check_order(Eigen::Index n, int p) {
  if (n < 1) throw DimensionError("noise tensor needs N >= 1");
  if (p < 2) throw InvalidArgument("tensor order p must be >= 2");
}

void require_unit(const StiefelPoint& x, const char* what) {
  if (x.scale() != Scale::Unit)
    throw ConventionError(std::string(what) + ": expects a unit-scale frame");
}

void require_sqrt_n(const StiefelPoint& x, const char* what) {
  if (x.scale() != Scale::SqrtN)
    throw ConventionError(std::string(what) + ": expects a sqrt(N)-scale frame");
}

// Single pass over all fibers computing values and/or gradients for every
// column of x. Prefix products exclude one mode at a time so that zero
// coordinates need no special casing.
void contract(const NoiseTensor& w, const Matrix& x, Vector* values, Matrix* grads,
              GradMode mode) {
  const Eigen::Index n = w.dim();
  const int p = w.order();
  const Eigen::Index r = x.cols();
  if (x.rows() != n) throw DimensionError("contraction: vector length differs from N");
  if (values) values->setZero(r);
  if (grads) grads->setZero(n, r);
  if (w.backend() == NoiseTensor::Backend::Zero) return;
  if (w.backend() == NoiseTensor::Backend::Streamed && p > kMaxStreamedOrder)
    throw InvalidArgument("streamed noise supports p <= " + std::to_string(kMaxStreamedOrder));

  const int prefix_len = p - 1;
  std::vector<Eigen::Index> idx(prefix_len, 0);
  std::vector<double> scratch;
  // excl(m, c): product over prefix modes other than m; full(c): all modes.
  Matrix excl(prefix_len, r);
  Vector full(r);
  Vector dots(r);
  const std::uint64_t prefixes = w.size() / static_cast<std::uint64_t>(n);

  for (std::uint64_t prefix = 0; prefix < prefixes; ++prefix) {
    for (Eigen::Index c = 0; c < r; ++c) {
      double prod = 1.0;
      for (int m = 0; m < prefix_len; ++m) prod *= x(idx[m], c);
      full(c) = prod;
      for (int m = 0; m < prefix_len; ++m) {
        double e = 1.0;
        for (int k = 0; k < prefix_len; ++k)
          if (k != m) e *= x(idx[k], c);
        excl(m, c) = e;
      }
    }
    const double* fiber = w.fiber(prefix, scratch);
    Eigen::Map<const Vector> wf(fiber, n);
    dots.noalias() = x.transpose() * wf;
    if (values) values->array() += full.array() * dots.array();
    if (grads) {
      if (mode == GradMode::Exact) {
        grads->noalias() += wf * full.transpose();
        for (int m = 0; m < prefix_len; ++m)
          grads->row(idx[m]).array() += excl.row(m).array() * dots.transpose().array();
      } else {
        grads->row(idx[0]).array() += excl.row(0).array() * dots.transpose().array();
      }
    }
    for (int m = prefix_len - 1; m >= 0; --m) {
      if (++idx[m] < n) break;
      idx[m] = 0;
    }
  }
  if (grads && mode == GradMode::FirstMode) *grads *= static_cast<double>(p);
}

}  // namespace

double ipow(double x, int k) {
  double result = 1.0;
  double base = x;
  while (k > 0) {
    if (k & 1) result *= base;
    base *= base;
    k >>= 1;
  }
  return result;
}

SpikedModel make_model(Eigen::Index n, Eigen::Index r, int p, const Vector& lambdas,
                       rng::Stream& stream, std::optional<StiefelPoint> v) {
  if (p < 2) throw InvalidArgument("tensor order p must be >= 2");
  if (r < 1 || n < r) throw DimensionError("model needs N >= r >= 1");
  if (lambdas.size() != r) throw DimensionError("need exactly r signal-to-noise ratios");
  for (Eigen::Index i = 0; i < r; ++i) {
    if (!(lambdas(i) > 0.0) || !std::isfinite(lambdas(i)))
      throw InvalidArgument("signal-to-noise ratios must be finite and strictly positive");
    if (i > 0 && lambdas(i) > lambdas(i - 1))
      throw InvalidArgument("signal-to-noise ratios must be sorted non-increasing");
  }
  if (v) {
    if (v->scale() != Scale::Unit) throw ConventionError("planted frame must be unit-scale");
    if (v->dim() != n || v->rank() != r) throw DimensionError("planted frame has wrong shape");
  } else {
    v = sample_invariant(n, r, Scale::Unit, stream);
  }
  return SpikedModel{n, r, p, lambdas, std::move(*v), 1.0};
}

void validate(const NoiseSpec& spec) {
  if (!(spec.sigma > 0.0) || !std::isfinite(spec.sigma))
    throw InvalidArgument("noise scale sigma must be positive");
}

const char* to_string(NoiseTensor::Backend backend) {
  switch (backend) {
    case NoiseTensor::Backend::Zero: return "zero";
    case NoiseTensor::Backend::Materialized: return "materialized";
    case NoiseTensor::Backend::Streamed: return "streamed";
  }
  return "?";
}

NoiseTensor::NoiseTensor(Backend backend, Eigen::Index n, int p, NoiseSpec spec,
                         std::uint64_t seed)
    : backend_(backend), n_(n), p_(p), size_(0), spec_(spec), seed_(seed) {
  check_order(n, p);
  validate(spec);
  size_ = checked_pow(n, p);
}

NoiseTensor NoiseTensor::zeros(Eigen::Index n, int p) {
  return NoiseTensor(Backend::Zero, n, p, NoiseSpec{}, 0);
}

NoiseTensor NoiseTensor::from_values(Eigen::Index n, int p, std::vector<double> values) {
  NoiseTensor t(Backend::Materialized, n, p, NoiseSpec{}, 0);
  if (values.size() != t.size_) throw DimensionError("from_values: expected N^p entries");
  t.values_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

NoiseTensor NoiseTensor::streamed(Eigen::Index n, int p, NoiseSpec spec, std::uint64_t seed) {
  return NoiseTensor(Backend::Streamed, n, p, spec, seed);
}

NoiseTensor NoiseTensor::materialized(Eigen::Index n, int p, NoiseSpec spec,
                                      std::uint64_t seed, std::size_t budget) {
  return streamed(n, p, spec, seed).materialize(budget);
}

NoiseTensor NoiseTensor::sample(Eigen::Index n, int p, NoiseSpec spec, std::uint64_t seed,
                                std::size_t budget) {
  NoiseTensor s = streamed(n, p, spec, seed);
  if (s.size() <= budget) return s.materialize(budget);
  return s;
}

NoiseTensor NoiseTensor::materialize(std::size_t budget) const {
  if (backend_ == Backend::Materialized) return *this;
  if (size_ > budget) {
    std::ostringstream os;
    os << "materializing N^p = " << size_ << " entries exceeds the memory budget of "
       << budget;
    throw InvalidArgument(os.str());
  }
  std::vector<double> values(static_cast<std::size_t>(size_));
  if (backend_ == Backend::Streamed) {
    std::vector<double> scratch;
    const std::uint64_t n = static_cast<std::uint64_t>(n_);
    for (std::uint64_t prefix = 0; prefix < size_ / n; ++prefix) {
      const double* f = fiber(prefix, scratch);
      std::copy(f, f + n, values.begin() + static_cast<std::ptrdiff_t>(prefix * n));
    }
  }
  NoiseTensor t = *this;
  t.backend_ = Backend::Materialized;
  t.values_ = std::make_shared<const std::vector<double>>(std::move(values));
  return t;
}

double NoiseTensor::entry_flat(std::uint64_t flat) const {
  if (flat >= size_) throw DimensionError("noise tensor index out of range");
  switch (backend_) {
    case Backend::Zero: return 0.0;
    case Backend::Materialized: return (*values_)[flat];
    case Backend::Streamed:
      if (spec_.dist == NoiseDist::Gaussian) {
        const auto [z0, z1] = rng::normal_pair(seed_, kNoiseDomain, flat >> 1);
        return spec_.sigma * ((flat & 1) ? z1 : z0);
      } else {
        const rng::Counter bits = rng::raw_block(seed_, kNoiseDomain, flat >> 7);
        const unsigned bit = static_cast<unsigned>(flat & 127);
        const bool set = (bits[bit >> 5] >> (bit & 31)) & 1u;
        return set ? spec_.sigma : -spec_.sigma;
      }
  }
  return 0.0;
}

double NoiseTensor::entry(std::span<const Eigen::Index> index) const {
  if (static_cast<int>(index.size()) != p_) throw DimensionError("noise tensor index has wrong arity");
  std::uint64_t flat = 0;
  for (Eigen::Index i : index) {
    if (i < 0 || i >= n_) throw DimensionError("noise tensor index out of range");
    flat = flat * static_cast<std::uint64_t>(n_) + static_cast<std::uint64_t>(i);
  }
  return entry_flat(flat);
}

const double* NoiseTensor::fiber(std::uint64_t prefix, std::vector<double>& scratch) const {
  const std::uint64_t n = static_cast<std::uint64_t>(n_);
  const std::uint64_t start = prefix * n;
  if (backend_ == Backend::Materialized) return values_->data() + start;
  scratch.assign(n, 0.0);
  if (backend_ == Backend::Zero) return scratch.data();
  if (spec_.dist == NoiseDist::Gaussian) {
    std::uint64_t k = 0;
    if (start & 1) {
      scratch[0] = entry_flat(start);
      k = 1;
    }
    for (; k + 1 < n; k += 2) {
      const auto [z0, z1] = rng::normal_pair(seed_, kNoiseDomain, (start + k) >> 1);
      scratch[k] = spec_.sigma * z0;
      scratch[k + 1] = spec_.sigma * z1;
    }
    if (k < n) scratch[k] = entry_flat(start + k);
  } else {
    for (std::uint64_t k = 0; k < n; ++k) scratch[k] = entry_flat(start + k);
  }
  return scratch.data();
}

NoiseTensor sample_noise(Eigen::Index n, int p, const NoiseSpec& spec, std::uint64_t seed,
                         std::size_t budget) {
  return NoiseTensor::sample(n, p, spec, seed, budget);
}

Vector noise_values(const NoiseTensor& w, const Matrix& x) {
  Vector values;
  contract(w, x, &values, nullptr, GradMode::Exact);
  return values;
}

Matrix noise_gradients(const NoiseTensor& w, const Matrix& x, GradMode mode) {
  Matrix grads;
  contract(w, x, nullptr, &grads, mode);
  return grads;
}

Observation::Observation(const NoiseTensor& noise, const SpikedModel& model)
    : noise_(&noise), model_(&model) {
  if (noise.dim() != model.n || noise.order() != model.p)
    throw DimensionError("observation: noise tensor shape does not match the model");
  if (model.v.scale() != Scale::Unit)
    throw ConventionError("observation: planted frame must be unit-scale");
}

double Observation::value(const Vector& a) const {
  if (a.size() != model_->n) throw DimensionError("observation: vector length differs from N");
  const double noise_part = noise_values(*noise_, a)(0);
  const Vector proj = model_->v.data().transpose() * a;
  double signal = 0.0;
  for (Eigen::Index i = 0; i < model_->r; ++i)
    signal += model_->lambdas(i) * ipow(proj(i), model_->p);
  return noise_part + model_->signal_scale * std::sqrt(static_cast<double>(model_->n)) * signal;
}

Observation observation(const NoiseTensor& w, const SpikedModel& model) {
  return Observation(w, model);
}

double population_loss(const StiefelPoint& x, const SpikedModel& model) {
  require_unit(x, "population_loss");
  const CorrelationMatrix m = correlation_matrix(model.v, x);
  double total = 0.0;
  for (Eigen::Index i = 0; i < model.r; ++i)
    for (Eigen::Index j = 0; j < model.r; ++j)
      total += model.lambdas(i) * model.lambdas(j) * ipow(m(i, j), model.p);
  return -model.signal_scale * std::sqrt(static_cast<double>(model.n)) * total;
}

double loss(const StiefelPoint& x, const Observation& y) {
  require_unit(x, "loss");
  const SpikedModel& model = y.model();
  if (x.dim() != model.n || x.rank() != model.r) throw DimensionError("loss: frame shape mismatch");
  const Vector noise = noise_values(y.noise(), x.data());
  return -model.lambdas.dot(noise) + population_loss(x, model);
}

Matrix grad_noise(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas,
                  GradMode mode) {
  require_unit(x, "grad_noise");
  if (lambdas.size() != x.rank()) throw DimensionError("grad_noise: need r weights");
  Matrix g = noise_gradients(w, x.data(), mode);
  return g * lambdas.asDiagonal();
}

namespace {

// Column j: sum_i lambda_i lambda_j m_ij^{p-1} v_i, for any frame scale.
Matrix weighted_spikes(const Matrix& v, const Matrix& m, const Vector& lambdas, int p) {
  const Eigen::Index r = m.rows();
  Matrix coeff(r, r);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < r; ++j)
      coeff(i, j) = lambdas(i) * lambdas(j) * ipow(m(i, j), p - 1);
  return v * coeff;
}

}  // namespace

Matrix grad_population(const StiefelPoint& x, const SpikedModel& model) {
  require_unit(x, "grad_population");
  const CorrelationMatrix m = correlation_matrix(model.v, x);
  return -static_cast<double>(model.p) * model.signal_scale *
         std::sqrt(static_cast<double>(model.n)) *
         weighted_spikes(model.v.data(), m.data, model.lambdas, model.p);
}

Matrix grad_loss(const StiefelPoint& x, const Observation& y, GradMode mode) {
  const SpikedModel& model = y.model();
  return grad_population(x, model) - grad_noise(y.noise(), x, model.lambdas, mode);
}

double hamiltonian_H0(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas) {
  require_sqrt_n(x, "hamiltonian_H0");
  if (lambdas.size() != x.rank()) throw DimensionError("hamiltonian_H0: need r weights");
  const double n = static_cast<double>(x.dim());
  return std::pow(n, -0.5 * (w.order() - 1)) * lambdas.dot(noise_values(w, x.data()));
}

Matrix grad_H0(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas,
               GradMode mode) {
  require_sqrt_n(x, "grad_H0");
  if (lambdas.size() != x.rank()) throw DimensionError("grad_H0: need r weights");
  const double n = static_cast<double>(x.dim());
  return std::pow(n, -0.5 * (w.order() - 1)) * noise_gradients(w, x.data(), mode) *
         lambdas.asDiagonal();
}

double empirical_risk(const StiefelPoint& x, const NoiseTensor& w, const SpikedModel& model,
                      double m_samples) {
  require_sqrt_n(x, "empirical_risk");
  if (!(m_samples >= 1.0)) throw InvalidArgument("sample count M must be >= 1");
  const StiefelPoint v = model.v_sqrt_n();
  const CorrelationMatrix m = correlation_matrix(v, x);
  double pop = 0.0;
  for (Eigen::Index i = 0; i < model.r; ++i)
    for (Eigen::Index j = 0; j < model.r; ++j)
      pop += model.lambdas(i) * model.lambdas(j) * ipow(m(i, j), model.p);
  const double noise = w.backend() == NoiseTensor::Backend::Zero
                           ? 0.0
                           : hamiltonian_H0(w, x, model.lambdas);
  return noise / std::sqrt(m_samples) -
         model.signal_scale * static_cast<double>(model.n) * pop;
}

TangentVector empirical_risk_force(const StiefelPoint& x, const NoiseTensor& w,
                                   const SpikedModel& model, double m_samples) {
  require_sqrt_n(x, "empirical_risk_force");
  if (!(m_samples >= 1.0)) throw InvalidArgument("sample count M must be >= 1");
  const StiefelPoint v = model.v_sqrt_n();
  const CorrelationMatrix m = correlation_matrix(v, x);
  Matrix grad = -static_cast<double>(model.p) * model.signal_scale *
                weighted_spikes(v.data(), m.data, model.lambdas, model.p);
  if (w.backend() != NoiseTensor::Backend::Zero)
    grad += grad_H0(w, x, model.lambdas) / std::sqrt(m_samples);
  TangentVector force = riemannian_gradient(x, grad);
  force.data = -force.data;
  return force;
}

}  // namespace stpca
