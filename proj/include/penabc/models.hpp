// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_MODELS_HPP
#define PENABC_MODELS_HPP

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "penabc/common.hpp"

/// Benchmark models: priors, simulators, ground truths, parameter transforms,
/// handpicked summaries and data preprocessing.
namespace penabc::models {

enum class ModelId { GAndK, AlphaStable, Ar2, Ma2 };

std::string_view model_name(ModelId model) noexcept;
/// Accepts "gandk", "alpha-stable", "ar2", "ma2" (plus a few aliases).
ModelId parse_model(std::string_view name);

/// Number of parameters: 4, 4, 2, 2.
std::size_t param_dim(ModelId model) noexcept;
/// Observed data size used in the benchmarks: 1000, 1000, 100, 100.
std::size_t default_series_length(ModelId model) noexcept;
/// True for the i.i.d. models (g-and-k, alpha-stable).
bool is_static(ModelId model) noexcept;

using Series = std::vector<double>;

/// A parameter point. For the alpha-stable model the values are in the
/// transformed (unconstrained) space.
struct ParamVector {
  ModelId model = ModelId::GAndK;
  std::vector<double> values;

  double operator[](std::size_t i) const { return values[i]; }
  std::size_t size() const noexcept { return values.size(); }
  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

ParamVector ground_truth(ModelId model);

bool in_ar2_triangle(double theta1, double theta2) noexcept;
bool in_ma2_triangle(double theta1, double theta2) noexcept;

struct PriorSpec {
  ModelId model = ModelId::GAndK;
  // Gamma(shape, rate) per component; only used by g-and-k.
  std::vector<double> gamma_shape;
  std::vector<double> gamma_rate;

  static PriorSpec for_model(ModelId model);

  bool in_support(std::span<const double> theta) const;
  /// Log density; -infinity off the support.
  double log_density(std::span<const double> theta) const;
};

ParamVector sample_prior(const PriorSpec& prior, Rng& rng);

// ---------------------------------------------------------------- g-and-k

inline constexpr double kGAndKDefaultC = 0.8;

struct GAndKParams {
  double a, b, g, k;
  double c = kGAndKDefaultC;
};

GAndKParams gandk_params(const ParamVector& theta, double c = kGAndKDefaultC);

/// Quantile function evaluated at a standard-normal deviate z.
double gandk_quantile(double z, const GAndKParams& p) noexcept;

/// Throws std::invalid_argument when B <= 0 or k < 0.
Series simulate_gandk(const ParamVector& theta, std::size_t m, Rng& rng,
                      double c = kGAndKDefaultC);

// ----------------------------------------------------------- alpha-stable

/// Parameters on their natural scale: alpha in (1.1, 2), beta in (-1, 1), gamma > 0.
struct AlphaStableParams {
  double alpha, beta, gamma, delta;
};

/// (alpha, beta, gamma, delta) -> (log((alpha-1.1)/(2-alpha)), log((beta+1)/(1-beta)), log gamma, delta).
ParamVector transform_alpha_params(const AlphaStableParams& raw);
AlphaStableParams inverse_transform_alpha_params(const ParamVector& tilde);

/// Characteristic function of the target law (alpha != 1 branch).
std::complex<double> alpha_stable_cf(double t, const AlphaStableParams& p);

/// Chambers-Mallows-Stuck draws, shifted to the parameterization of alpha_stable_cf.
Series simulate_alpha_stable(const AlphaStableParams& p, std::size_t m, Rng& rng);
Series simulate_alpha_stable(const ParamVector& theta_tilde, std::size_t m, Rng& rng);

// ---------------------------------------------------------- time series

/// Stationary (gamma0, gamma1) of the unit-noise AR(2) process.
std::pair<double, double> ar2_stationary_covariance(double theta1, double theta2);

/// AR(2) with N(0,1) innovations, started from its stationary distribution.
Series simulate_ar2(const ParamVector& theta, std::size_t m, Rng& rng);

inline constexpr double kMa2NoiseSd = 0.3;

/// MA(2) latent process observed with additive N(0, sigma_eps^2) noise.
Series simulate_ma2_noisy(const ParamVector& theta, std::size_t m, Rng& rng,
                          double sigma_eps = kMa2NoiseSd);

/// Dispatches to the model's simulator (no preprocessing).
Series simulate(const ParamVector& theta, std::size_t m, Rng& rng);

// ---------------------------------------------------------- preprocessing

enum class RobustScaleSign {
  AsPrinted,     // (y + Q1) / (Q3 - Q1)
  Conventional,  // (y - Q1) / (Q3 - Q1)
};

struct PreprocessSpec {
  bool clean = false;
  double clean_lo = -10.0;
  double clean_hi = 50.0;
  std::vector<double> ecdf_grid;
  bool apply_robust_scale = false;
  RobustScaleSign scale_sign = RobustScaleSign::AsPrinted;

  static PreprocessSpec for_model(ModelId model);
};

/// Out-of-window values are replaced by uniform draws over the span of the
/// in-window values. Throws if no value lies in [lo, hi].
Series clean_outliers(std::span<const double> y, double lo, double hi, Rng& rng);

/// Simulates and applies the model's cleaning step; this is what the
/// reference tables, training sets and observed data sets hold.
Series simulate_observation(const ParamVector& theta, std::size_t m, Rng& rng);

struct RobustScaled {
  Series scaled;
  double q1 = 0.0;
  double q3 = 0.0;
};

/// Throws std::invalid_argument when Q3 == Q1.
RobustScaled robust_scale(std::span<const double> y,
                          RobustScaleSign sign = RobustScaleSign::AsPrinted);

/// feature_j = #{y_i <= grid_j} / M.
std::vector<double> ecdf_features(std::span<const double> y, std::span<const double> grid);

// -------------------------------------------------------------- summaries

/// gamma(y, k) = (1/M) sum_{l} (y_l - mean)(y_{l+k} - mean).
double autocovariance(std::span<const double> y, std::size_t lag);
/// m3 / m2^{3/2}; 0 for a constant series.
double sample_skewness(std::span<const double> y);

/// g-and-k: P20, P40, P60, P80, skewness.
/// alpha-stable: McCulloch quantile statistics plus the sample mean.
/// AR(2): autocovariances at lags 1..5. MA(2): lags 1..2.
std::vector<double> handpicked_summaries(ModelId model, std::span<const double> y);
std::size_t handpicked_dim(ModelId model) noexcept;

}  // namespace penabc::models

#endif  // PENABC_MODELS_HPP
