#pragma once

// The spiked tensor model Y = W + sqrt(N) * sum_i lambda_i v_i^{(x)p}, its
// noise tensors and the loss / gradient evaluations the dynamics need.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "stpca/manifold.hpp"

namespace stpca {

inline constexpr std::size_t kDefaultMemoryBudget = 100'000'000;  // entries
inline constexpr int kMaxStreamedOrder = 8;

/// x^k for small non-negative integer k.
double ipow(double x, int k);

struct SpikedModel {
  Eigen::Index n = 0;
  Eigen::Index r = 0;
  int p = 0;
  Vector lambdas;  // non-increasing, positive
  StiefelPoint v;  // planted frame, unit columns
  /// Multiplies the planted part of Y only; 0 gives the pure-noise model
  /// while keeping the lambda weights of the loss.
  double signal_scale = 1.0;

  /// V rescaled to columns of norm sqrt(N).
  StiefelPoint v_sqrt_n() const { return v.rescaled(Scale::SqrtN); }
};

/// Validates p >= 2, N >= r >= 1 and lambda sorted non-increasing and
/// strictly positive. Samples V from the invariant measure when absent.
SpikedModel make_model(Eigen::Index n, Eigen::Index r, int p, const Vector& lambdas,
                       rng::Stream& stream, std::optional<StiefelPoint> v = std::nullopt);

enum class NoiseDist { Gaussian, Rademacher };

struct NoiseSpec {
  NoiseDist dist = NoiseDist::Gaussian;
  double sigma = 1.0;
};

void validate(const NoiseSpec& spec);

enum class GradMode {
  Exact,      // sum of the p single-mode contractions
  FirstMode,  // p times the mode-1 contraction
};

/// Order-p tensor on R^N, flat index i_1 N^{p-1} + ... + i_p.
class NoiseTensor {
 public:
  enum class Backend { Zero, Materialized, Streamed };

  static NoiseTensor zeros(Eigen::Index n, int p);
  static NoiseTensor from_values(Eigen::Index n, int p, std::vector<double> values);
  static NoiseTensor streamed(Eigen::Index n, int p, NoiseSpec spec, std::uint64_t seed);
  /// Same entries as `streamed` with the same seed, stored densely.
  static NoiseTensor materialized(Eigen::Index n, int p, NoiseSpec spec,
                                  std::uint64_t seed,
                                  std::size_t budget = kDefaultMemoryBudget);
  /// Materialized when N^p fits the budget, streamed otherwise.
  static NoiseTensor sample(Eigen::Index n, int p, NoiseSpec spec, std::uint64_t seed,
                            std::size_t budget = kDefaultMemoryBudget);

  Backend backend() const { return backend_; }
  Eigen::Index dim() const { return n_; }
  int order() const { return p_; }
  std::uint64_t size() const { return size_; }
  const NoiseSpec& spec() const { return spec_; }

  double entry(std::span<const Eigen::Index> index) const;
  double entry_flat(std::uint64_t flat) const;

  /// The N entries whose first p-1 indices flatten to `prefix`. Returns a
  /// pointer into storage or into `scratch`.
  const double* fiber(std::uint64_t prefix, std::vector<double>& scratch) const;

  /// Dense copy of the entries (budget-checked).
  NoiseTensor materialize(std::size_t budget = kDefaultMemoryBudget) const;

 private:
  NoiseTensor(Backend backend, Eigen::Index n, int p, NoiseSpec spec, std::uint64_t seed);

  Backend backend_;
  Eigen::Index n_;
  int p_;
  std::uint64_t size_;
  NoiseSpec spec_;
  std::uint64_t seed_;
  std::shared_ptr<const std::vector<double>> values_;
};

const char* to_string(NoiseTensor::Backend backend);

NoiseTensor sample_noise(Eigen::Index n, int p, const NoiseSpec& spec, std::uint64_t seed,
                         std::size_t budget = kDefaultMemoryBudget);

/// <W, x_c^{(x)p}> for every column c of `x`.
Vector noise_values(const NoiseTensor& w, const Matrix& x);

/// Column c is grad_x <W, x^{(x)p}> at x = x_c (unweighted).
Matrix noise_gradients(const NoiseTensor& w, const Matrix& x, GradMode mode);

/// Observation Y for a model; holds references, so both arguments must
/// outlive it.
class Observation {
 public:
  Observation(const NoiseTensor& noise, const SpikedModel& model);

  /// <Y, a^{(x)p}> for a unit-scale vector a.
  double value(const Vector& a) const;

  const NoiseTensor& noise() const { return *noise_; }
  const SpikedModel& model() const { return *model_; }

 private:
  const NoiseTensor* noise_;
  const SpikedModel* model_;
};

Observation observation(const NoiseTensor& w, const SpikedModel& model);

/// L(X; Y) = -sum_i lambda_i <Y, x_i^{(x)p}> on unit-scale X.
double loss(const StiefelPoint& x, const Observation& y);

/// Expected loss -sqrt(N) sum_ij lambda_i lambda_j m_ij^p.
double population_loss(const StiefelPoint& x, const SpikedModel& model);

/// Column i is lambda_i grad <W, x_i^{(x)p}>.
Matrix grad_noise(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas,
                  GradMode mode = GradMode::Exact);

/// Euclidean gradient of the population loss; column j is
/// -p sqrt(N) lambda_j sum_i lambda_i m_ij^{p-1} v_i.
Matrix grad_population(const StiefelPoint& x, const SpikedModel& model);

/// Euclidean gradient of L(.; Y) = -grad_noise + grad_population.
Matrix grad_loss(const StiefelPoint& x, const Observation& y,
                 GradMode mode = GradMode::Exact);

/// H_0(X) = N^{-(p-1)/2} sum_i lambda_i <W, x_i^{(x)p}> on sqrt(N)-scale X.
double hamiltonian_H0(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas);

/// Euclidean gradient of H_0.
Matrix grad_H0(const NoiseTensor& w, const StiefelPoint& x, const Vector& lambdas,
               GradMode mode = GradMode::Exact);

/// Empirical risk R(X) = H_0(X)/sqrt(M) - sum_ij N lambda_i lambda_j (m_ij)^p.
double empirical_risk(const StiefelPoint& x, const NoiseTensor& w, const SpikedModel& model,
                      double m_samples);

/// -grad_M R(X), tangent at X (sqrt(N) scale).
TangentVector empirical_risk_force(const StiefelPoint& x, const NoiseTensor& w,
                                   const SpikedModel& model, double m_samples);

}  // namespace stpca
