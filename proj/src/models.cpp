// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace penabc::models {

namespace {

constexpr double kPi = std::numbers::pi;

void require_dim(const ParamVector& theta, ModelId model) {
  if (theta.model != model || theta.values.size() != param_dim(model)) {
    throw std::invalid_argument(std::string("parameter vector does not match model ") +
                                std::string(model_name(model)));
  }
}

std::vector<double> sorted_copy(std::span<const double> y) {
  std::vector<double> s(y.begin(), y.end());
  std::sort(s.begin(), s.end());
  return s;
}

double mean_of(std::span<const double> y) {
  CompensatedSum acc;
  for (double v : y) acc.add(v);
  return acc.value() / static_cast<double>(y.size());
}

}  // namespace

std::string_view model_name(ModelId model) noexcept {
  switch (model) {
    case ModelId::GAndK: return "gandk";
    case ModelId::AlphaStable: return "alpha-stable";
    case ModelId::Ar2: return "ar2";
    case ModelId::Ma2: return "ma2";
  }
  return "unknown";
}

ModelId parse_model(std::string_view name) {
  if (name == "gandk" || name == "g-and-k" || name == "gk") return ModelId::GAndK;
  if (name == "alpha-stable" || name == "alpha" || name == "alphastable") return ModelId::AlphaStable;
  if (name == "ar2" || name == "AR2") return ModelId::Ar2;
  if (name == "ma2" || name == "MA2") return ModelId::Ma2;
  throw ConfigError("unknown model '" + std::string(name) +
                    "' (expected gandk, alpha-stable, ar2 or ma2)");
}

std::size_t param_dim(ModelId model) noexcept {
  return (model == ModelId::Ar2 || model == ModelId::Ma2) ? 2 : 4;
}

std::size_t default_series_length(ModelId model) noexcept {
  return is_static(model) ? 1000 : 100;
}

bool is_static(ModelId model) noexcept {
  return model == ModelId::GAndK || model == ModelId::AlphaStable;
}

ParamVector ground_truth(ModelId model) {
  switch (model) {
    case ModelId::GAndK: return {model, {3.0, 1.0, 2.0, 0.5}};
    case ModelId::AlphaStable: return transform_alpha_params({1.5, 0.5, 1.0, 0.0});
    case ModelId::Ar2: return {model, {0.2, -0.13}};
    case ModelId::Ma2: return {model, {0.6, 0.2}};
  }
  throw std::logic_error("unreachable");
}

bool in_ar2_triangle(double theta1, double theta2) noexcept {
  return theta2 < 1.0 + theta1 && theta2 < 1.0 - theta1 && theta2 > -1.0;
}

bool in_ma2_triangle(double theta1, double theta2) noexcept {
  return theta1 >= -2.0 && theta1 <= 2.0 && theta2 >= -1.0 && theta2 <= 1.0 &&
         theta2 + theta1 >= -1.0 && theta2 - theta1 >= -1.0;
}

PriorSpec PriorSpec::for_model(ModelId model) {
  PriorSpec p;
  p.model = model;
  if (model == ModelId::GAndK) {
    p.gamma_shape = {2.0, 2.0, 2.0, 2.0};
    p.gamma_rate = {1.0, 1.0, 0.5, 1.0};
  }
  return p;
}

bool PriorSpec::in_support(std::span<const double> theta) const {
  if (theta.size() != param_dim(model)) return false;
  if (!std::all_of(theta.begin(), theta.end(), [](double v) { return std::isfinite(v); })) {
    return false;
  }
  switch (model) {
    case ModelId::GAndK:
      return std::all_of(theta.begin(), theta.end(), [](double v) { return v > 0.0; });
    case ModelId::AlphaStable: return true;
    case ModelId::Ar2: return in_ar2_triangle(theta[0], theta[1]);
    case ModelId::Ma2: return in_ma2_triangle(theta[0], theta[1]);
  }
  return false;
}

double PriorSpec::log_density(std::span<const double> theta) const {
  if (!in_support(theta)) return -std::numeric_limits<double>::infinity();
  switch (model) {
    case ModelId::GAndK: {
      double lp = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double a = gamma_shape[i];
        const double r = gamma_rate[i];
        lp += a * std::log(r) - std::lgamma(a) + (a - 1.0) * std::log(theta[i]) - r * theta[i];
      }
      return lp;
    }
    case ModelId::AlphaStable: {
      double lp = 0.0;
      for (double v : theta) lp += -0.5 * v * v - 0.5 * std::log(2.0 * kPi);
      return lp;
    }
    case ModelId::Ar2: return -std::log(4.0);  // triangle area 4
    case ModelId::Ma2: return -std::log(4.0);  // triangle area 4
  }
  return -std::numeric_limits<double>::infinity();
}

ParamVector sample_prior(const PriorSpec& prior, Rng& rng) {
  ParamVector theta{prior.model, {}};
  switch (prior.model) {
    case ModelId::GAndK:
      for (std::size_t i = 0; i < 4; ++i) {
        std::gamma_distribution<double> dist(prior.gamma_shape[i], 1.0 / prior.gamma_rate[i]);
        theta.values.push_back(dist(rng));
      }
      break;
    case ModelId::AlphaStable: {
      std::normal_distribution<double> dist(0.0, 1.0);
      for (std::size_t i = 0; i < 4; ++i) theta.values.push_back(dist(rng));
      break;
    }
    case ModelId::Ar2:
    case ModelId::Ma2: {
      std::uniform_real_distribution<double> u1(-2.0, 2.0);
      std::uniform_real_distribution<double> u2(-1.0, 1.0);
      for (;;) {
        const double t1 = u1(rng);
        const double t2 = u2(rng);
        const bool ok = prior.model == ModelId::Ar2 ? in_ar2_triangle(t1, t2) : in_ma2_triangle(t1, t2);
        if (ok) {
          theta.values = {t1, t2};
          break;
        }
      }
      break;
    }
  }
  return theta;
}

// ---------------------------------------------------------------- g-and-k

GAndKParams gandk_params(const ParamVector& theta, double c) {
  require_dim(theta, ModelId::GAndK);
  return {theta[0], theta[1], theta[2], theta[3], c};
}

double gandk_quantile(double z, const GAndKParams& p) noexcept {
  return p.a + p.b * (1.0 + p.c * std::tanh(p.g * z / 2.0)) * z * std::pow(1.0 + z * z, p.k);
}

Series simulate_gandk(const ParamVector& theta, std::size_t m, Rng& rng, double c) {
  const GAndKParams p = gandk_params(theta, c);
  if (!(p.b > 0.0) || !(p.k >= 0.0)) {
    throw std::invalid_argument("g-and-k requires B > 0 and k >= 0");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  Series y(m);
  for (auto& v : y) v = gandk_quantile(normal(rng), p);
  return y;
}

// ----------------------------------------------------------- alpha-stable

ParamVector transform_alpha_params(const AlphaStableParams& raw) {
  if (!(raw.alpha > 1.1 && raw.alpha < 2.0)) {
    throw std::invalid_argument("alpha must lie in (1.1, 2)");
  }
  if (!(raw.beta > -1.0 && raw.beta < 1.0)) {
    throw std::invalid_argument("beta must lie in (-1, 1)");
  }
  if (!(raw.gamma > 0.0) || !std::isfinite(raw.gamma) || !std::isfinite(raw.delta)) {
    throw std::invalid_argument("gamma must be positive and finite, delta finite");
  }
  return {ModelId::AlphaStable,
          {std::log((raw.alpha - 1.1) / (2.0 - raw.alpha)),
           std::log((raw.beta + 1.0) / (1.0 - raw.beta)), std::log(raw.gamma), raw.delta}};
}

AlphaStableParams inverse_transform_alpha_params(const ParamVector& tilde) {
  require_dim(tilde, ModelId::AlphaStable);
  for (double v : tilde.values) {
    if (!std::isfinite(v)) throw std::invalid_argument("alpha-stable parameters must be finite");
  }
  // alpha = 1.1 + 0.9 * logistic(a), beta = tanh(b / 2)
  const double alpha = 1.1 + 0.9 / (1.0 + std::exp(-tilde[0]));
  const double beta = std::tanh(tilde[1] / 2.0);
  const double gamma = std::exp(tilde[2]);
  if (!(alpha > 1.1 && alpha < 2.0) || !(beta > -1.0 && beta < 1.0) || !(gamma > 0.0) ||
      !std::isfinite(gamma)) {
    throw std::invalid_argument("transformed alpha-stable parameters saturate their interval");
  }
  return {alpha, beta, gamma, tilde[3]};
}

std::complex<double> alpha_stable_cf(double t, const AlphaStableParams& p) {
  using namespace std::complex_literals;
  if (t == 0.0) return 1.0;
  const double sgn = t > 0.0 ? 1.0 : -1.0;
  const double at = std::abs(t);
  const double tan_term = std::tan(kPi * p.alpha / 2.0);
  const double scale = std::pow(p.gamma, p.alpha) * std::pow(at, p.alpha);
  const std::complex<double> inner =
      1.0 + 1i * p.beta * tan_term * sgn * (std::pow(p.gamma * at, 1.0 - p.alpha) - 1.0);
  return std::exp(1i * p.delta * t - scale * inner);
}

Series simulate_alpha_stable(const AlphaStableParams& p, std::size_t m, Rng& rng) {
  if (!(p.alpha > 1.1 && p.alpha < 2.0) || !(p.beta > -1.0 && p.beta < 1.0) || !(p.gamma > 0.0)) {
    throw std::invalid_argument("alpha-stable parameters outside (1.1,2) x (-1,1) x (0,inf)");
  }
  const double alpha = p.alpha;
  const double tan_term = std::tan(kPi * alpha / 2.0);
  const double skew_shift = std::atan(p.beta * tan_term) / alpha;
  const double skew_scale = std::pow(1.0 + p.beta * p.beta * tan_term * tan_term, 1.0 / (2.0 * alpha));
  // Location shift from the standard (1-) parameterization to the one of alpha_stable_cf.
  const double location = p.delta - p.beta * p.gamma * tan_term;

  std::uniform_real_distribution<double> uniform(-kPi / 2.0, kPi / 2.0);
  std::exponential_distribution<double> exponential(1.0);
  Series y(m);
  for (auto& out : y) {
    double v = uniform(rng);
    while (v <= -kPi / 2.0) v = uniform(rng);
    double w = exponential(rng);
    while (w <= 0.0) w = exponential(rng);
    const double arg = alpha * (v + skew_shift);
    const double x = skew_scale * std::sin(arg) / std::pow(std::cos(v), 1.0 / alpha) *
                     std::pow(std::cos(v - arg) / w, (1.0 - alpha) / alpha);
    out = p.gamma * x + location;
  }
  return y;
}

Series simulate_alpha_stable(const ParamVector& theta_tilde, std::size_t m, Rng& rng) {
  return simulate_alpha_stable(inverse_transform_alpha_params(theta_tilde), m, rng);
}

// ---------------------------------------------------------- time series

std::pair<double, double> ar2_stationary_covariance(double theta1, double theta2) {
  if (!in_ar2_triangle(theta1, theta2)) {
    throw std::invalid_argument("AR(2) parameters outside the stationarity triangle");
  }
  const double gamma0 =
      (1.0 - theta2) / ((1.0 + theta2) * ((1.0 - theta2) * (1.0 - theta2) - theta1 * theta1));
  const double gamma1 = theta1 * gamma0 / (1.0 - theta2);
  return {gamma0, gamma1};
}

Series simulate_ar2(const ParamVector& theta, std::size_t m, Rng& rng) {
  require_dim(theta, ModelId::Ar2);
  const double t1 = theta[0];
  const double t2 = theta[1];
  const auto [g0, g1] = ar2_stationary_covariance(t1, t2);
  std::normal_distribution<double> normal(0.0, 1.0);
  Series y(m);
  if (m == 0) return y;
  y[0] = std::sqrt(g0) * normal(rng);
  if (m == 1) return y;
  const double rho = g1 / g0;
  y[1] = rho * y[0] + std::sqrt(g0 * (1.0 - rho * rho)) * normal(rng);
  for (std::size_t l = 2; l < m; ++l) {
    y[l] = t1 * y[l - 1] + t2 * y[l - 2] + normal(rng);
  }
  return y;
}

Series simulate_ma2_noisy(const ParamVector& theta, std::size_t m, Rng& rng, double sigma_eps) {
  require_dim(theta, ModelId::Ma2);
  if (!in_ma2_triangle(theta[0], theta[1])) {
    throw std::invalid_argument("MA(2) parameters outside the identifiability triangle");
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> innov(m + 2);
  for (auto& e : innov) e = normal(rng);
  Series y(m);
  for (std::size_t l = 0; l < m; ++l) {
    const double x = innov[l + 2] + theta[0] * innov[l + 1] + theta[1] * innov[l];
    y[l] = x + sigma_eps * normal(rng);
  }
  return y;
}

Series simulate(const ParamVector& theta, std::size_t m, Rng& rng) {
  switch (theta.model) {
    case ModelId::GAndK: return simulate_gandk(theta, m, rng);
    case ModelId::AlphaStable: return simulate_alpha_stable(theta, m, rng);
    case ModelId::Ar2: return simulate_ar2(theta, m, rng);
    case ModelId::Ma2: return simulate_ma2_noisy(theta, m, rng);
  }
  throw std::logic_error("unreachable");
}

// ---------------------------------------------------------- preprocessing

PreprocessSpec PreprocessSpec::for_model(ModelId model) {
  PreprocessSpec spec;
  if (model == ModelId::GAndK) {
    spec.clean = true;
    spec.ecdf_grid = linspace(0.0, 50.0, 100);
  } else if (model == ModelId::AlphaStable) {
    spec.clean = true;
    spec.ecdf_grid = linspace(-10.0, 100.0, 100);
    spec.apply_robust_scale = true;
  }
  return spec;
}

Series clean_outliers(std::span<const double> y, double lo, double hi, Rng& rng) {
  if (!(lo < hi)) throw std::invalid_argument("cleaning window must satisfy lo < hi");
  double min_in = std::numeric_limits<double>::infinity();
  double max_in = -std::numeric_limits<double>::infinity();
  bool any_out = false;
  for (double v : y) {
    if (v >= lo && v <= hi) {
      min_in = std::min(min_in, v);
      max_in = std::max(max_in, v);
    } else {
      any_out = true;
    }
  }
  if (!(min_in <= max_in)) {
    throw std::invalid_argument("every value lies outside the cleaning window");
  }
  Series out(y.begin(), y.end());
  if (!any_out) return out;
  std::uniform_real_distribution<double> uniform(min_in, max_in);
  for (auto& v : out) {
    if (!(v >= lo && v <= hi)) {
      v = min_in == max_in ? min_in : std::clamp(uniform(rng), min_in, max_in);
    }
  }
  return out;
}

Series simulate_observation(const ParamVector& theta, std::size_t m, Rng& rng) {
  Series y = simulate(theta, m, rng);
  const PreprocessSpec spec = PreprocessSpec::for_model(theta.model);
  if (spec.clean) y = clean_outliers(y, spec.clean_lo, spec.clean_hi, rng);
  return y;
}

RobustScaled robust_scale(std::span<const double> y, RobustScaleSign sign) {
  const std::vector<double> s = sorted_copy(y);
  RobustScaled out;
  out.q1 = quantile_sorted(s, 0.25);
  out.q3 = quantile_sorted(s, 0.75);
  const double spread = out.q3 - out.q1;
  if (!(spread > 0.0)) {
    throw std::invalid_argument("robust scaling needs Q3 > Q1");
  }
  const double shift = sign == RobustScaleSign::AsPrinted ? out.q1 : -out.q1;
  out.scaled.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.scaled[i] = (y[i] + shift) / spread;
  return out;
}

std::vector<double> ecdf_features(std::span<const double> y, std::span<const double> grid) {
  const std::vector<double> s = sorted_copy(y);
  const double inv_m = 1.0 / static_cast<double>(s.size());
  std::vector<double> out(grid.size());
  for (std::size_t j = 0; j < grid.size(); ++j) {
    const auto count = std::upper_bound(s.begin(), s.end(), grid[j]) - s.begin();
    out[j] = static_cast<double>(count) * inv_m;
  }
  return out;
}

// -------------------------------------------------------------- summaries

double autocovariance(std::span<const double> y, std::size_t lag) {
  if (y.size() <= lag) {
    throw std::invalid_argument("series too short for the requested autocovariance lag");
  }
  const double mean = mean_of(y);
  CompensatedSum acc;
  for (std::size_t l = 0; l + lag < y.size(); ++l) {
    acc.add((y[l] - mean) * (y[l + lag] - mean));
  }
  return acc.value() / static_cast<double>(y.size());
}

double sample_skewness(std::span<const double> y) {
  if (y.empty()) throw std::invalid_argument("skewness of an empty series");
  // Sorting first makes the result exactly permutation invariant.
  const std::vector<double> s = sorted_copy(y);
  const double mean = mean_of(s);
  CompensatedSum m2;
  CompensatedSum m3;
  for (double v : s) {
    const double d = v - mean;
    m2.add(d * d);
    m3.add(d * d * d);
  }
  const double n = static_cast<double>(s.size());
  const double var = m2.value() / n;
  if (!(var > 0.0)) return 0.0;
  return (m3.value() / n) / std::pow(var, 1.5);
}

std::size_t handpicked_dim(ModelId model) noexcept {
  return model == ModelId::Ma2 ? 2 : 5;
}

std::vector<double> handpicked_summaries(ModelId model, std::span<const double> y) {
  switch (model) {
    case ModelId::GAndK: {
      if (y.empty()) throw std::invalid_argument("empty series");
      const std::vector<double> s = sorted_copy(y);
      return {quantile_sorted(s, 0.2), quantile_sorted(s, 0.4), quantile_sorted(s, 0.6),
              quantile_sorted(s, 0.8), sample_skewness(s)};
    }
    case ModelId::AlphaStable: {
      if (y.empty()) throw std::invalid_argument("empty series");
      const std::vector<double> s = sorted_copy(y);
      const double q05 = quantile_sorted(s, 0.05);
      const double q25 = quantile_sorted(s, 0.25);
      const double q50 = quantile_sorted(s, 0.50);
      const double q75 = quantile_sorted(s, 0.75);
      const double q95 = quantile_sorted(s, 0.95);
      const double iqr = q75 - q25;
      const double wide = q95 - q05;
      return {iqr > 0.0 ? wide / iqr : 0.0, wide > 0.0 ? (q95 + q05 - 2.0 * q50) / wide : 0.0, iqr,
              q50, mean_of(s)};
    }
    case ModelId::Ar2: {
      if (y.size() <= 5) throw std::invalid_argument("AR(2) summaries need M > 5");
      std::vector<double> out(5);
      for (std::size_t k = 0; k < 5; ++k) out[k] = autocovariance(y, k + 1);
      return out;
    }
    case ModelId::Ma2: {
      if (y.size() <= 2) throw std::invalid_argument("MA(2) summaries need M > 2");
      return {autocovariance(y, 1), autocovariance(y, 2)};
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace penabc::models
