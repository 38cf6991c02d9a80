// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_REFERENCE_HPP
#define PENABC_REFERENCE_HPP

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "penabc/common.hpp"
#include "penabc/models.hpp"

/// Reference posteriors and the metrics used to score ABC output against them.
namespace penabc::reference {

/// Log density (up to a constant) of a parameter point; -infinity off support.
using LogDensity = std::function<double(std::span<const double>)>;

// ------------------------------------------------------------ likelihoods

/// Exact stationary Gaussian log-likelihood of an AR(2) series: (y1, y2) from
/// the stationary bivariate normal, then y_l | past ~ N(t1 y_{l-1} + t2 y_{l-2}, 1).
/// -infinity outside the stationarity triangle.
double ar2_loglik(std::span<const double> theta, std::span<const double> y);

/// (lag 0, lag 1, lag 2) autocovariances of the noisy MA(2) observation process.
std::array<double, 3> ma2_covariance(double theta1, double theta2, double sigma_eps = 0.3);

/// Gaussian log-density under the banded MA(2) covariance, via a banded
/// Cholesky factorisation. -infinity outside the invertibility triangle.
double ma2_loglik(std::span<const double> theta, std::span<const double> y, double sigma_eps = 0.3);

/// Solves Q(z) = x for the g-and-k quantile function by safeguarded Newton
/// iteration. Returns false when x lies outside the attainable range.
bool gandk_invert(double x, const models::GAndKParams& p, double& z);

/// log f(x) = log phi(z*) - log Q'(z*), with Q' from a central difference of
/// step 1e-6 in z. -infinity if x is not attainable or B <= 0 or k < 0.
double gandk_logpdf(double x, const models::GAndKParams& p);
/// Sum of gandk_logpdf over the data.
double gandk_loglik(std::span<const double> theta, std::span<const double> y, double c = 0.8);

/// Log prior plus log-likelihood of the model for observed y.
LogDensity log_posterior(models::ModelId model, std::vector<double> y);

// ---------------------------------------------------------- grid oracle

struct GridPosterior {
  RowMatrix nodes;             // n x 2 cell centres inside the prior triangle
  std::vector<double> masses;  // normalised, parallel to nodes
  double cell_width = 0.0;     // theta_1 spacing
  double cell_height = 0.0;    // theta_2 spacing

  std::size_t size() const noexcept { return masses.size(); }
};

/// Masses proportional to exp(loglik) (the prior is uniform on the triangle)
/// on a resolution x resolution grid of cell centres over [-2,2] x [-1,1],
/// keeping the centres inside the AR(2) or MA(2) triangle. Throws if every
/// mass underflows.
GridPosterior grid_posterior(models::ModelId model, const LogDensity& loglik, std::size_t resolution,
                             std::size_t threads = 1);

/// Inverse-CDF draws of grid nodes.
RowMatrix sample_grid(const GridPosterior& gp, std::size_t n, Rng& rng);

std::vector<double> posterior_mean(const GridPosterior& gp);

// -------------------------------------------------------------- Metropolis

struct MetropolisResult {
  RowMatrix chain;  // one row per step (after thinning)
  double acceptance_rate = 0.0;
};

/// Gaussian random-walk Metropolis with per-coordinate proposal scales.
/// Throws std::invalid_argument if init is off support and
/// std::runtime_error if no proposal was accepted.
MetropolisResult rw_metropolis(const LogDensity& logpost, std::span<const double> init, std::size_t steps,
                               std::span<const double> proposal_scale, Rng& rng, std::size_t thin = 1);

struct TunedChainConfig {
  std::size_t tuning_batches = 30;
  std::size_t batch_steps = 100;
  std::size_t burn_in = 1000;
  std::size_t draws = 1000;
  std::size_t thin = 10;
  double target_low = 0.2;
  double target_high = 0.4;
};

/// Adapts the proposal scales batch by batch until the acceptance rate sits
/// in [target_low, target_high], then runs a fixed-scale chain.
MetropolisResult tuned_metropolis(const LogDensity& logpost, std::span<const double> init,
                                  std::vector<double> initial_scale, const TunedChainConfig& cfg, Rng& rng);

// ------------------------------------------------------------------ metrics

/// Correctly rounded sum of the exact values of `terms` (Shewchuk expansion).
double exact_sum(std::span<const double> terms);

/// Optimal assignment for a square cost matrix: perm[i] is the column given to row i.
std::vector<std::size_t> hungarian(const RowMatrix& cost);

/// Cost of a matching between equal-size samples, divided by n. In one
/// dimension the pairwise |a - b| are summed exactly (so every optimal
/// matching yields the same value); otherwise the Euclidean costs are summed
/// with exact_sum().
double matching_cost(const RowMatrix& a, const RowMatrix& b, std::span<const std::size_t> perm);

/// Order-1 Wasserstein distance with Euclidean ground cost between
/// equal-weight empirical measures. When sizes differ, the larger sample is
/// subsampled without replacement using `seed`. One-dimensional inputs use
/// the sorted pairing.
double wasserstein(const RowMatrix& a, const RowMatrix& b, std::uint64_t seed = 0);

/// Assignment-solver path regardless of dimension (equal sizes only).
double wasserstein_assignment(const RowMatrix& a, const RowMatrix& b);
/// Sorted pairing; both samples one-dimensional and of equal size.
double wasserstein_1d(std::span<const double> a, std::span<const double> b);

/// sqrt( (1/R) sum_r ||estimate_r - truth||^2 ).
double rmse(const RowMatrix& estimates, std::span<const double> truth);

}  // namespace penabc::reference

#endif  // PENABC_REFERENCE_HPP
