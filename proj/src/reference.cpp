// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace penabc::reference {

using models::ModelId;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gandk_quantile_derivative(double z, const models::GAndKParams& p) {
  const double t = std::tanh(p.g * z / 2.0);
  const double s = 1.0 + z * z;
  const double pw = std::pow(s, p.k);
  const double skew = 1.0 + p.c * t;
  const double dskew = p.c * (1.0 - t * t) * p.g / 2.0;
  return p.b * (dskew * z * pw + skew * (pw + 2.0 * p.k * z * z * pw / s));
}

}  // namespace

// ------------------------------------------------------------ likelihoods

double ar2_loglik(std::span<const double> theta, std::span<const double> y) {
  if (theta.size() != 2) throw std::invalid_argument("AR(2) has two parameters");
  if (!models::in_ar2_triangle(theta[0], theta[1])) return kNegInf;
  if (y.empty()) return 0.0;
  const auto [g0, g1] = models::ar2_stationary_covariance(theta[0], theta[1]);
  if (y.size() == 1) return -0.5 * (kLog2Pi + std::log(g0) + y[0] * y[0] / g0);
  const double det = g0 * g0 - g1 * g1;
  const double quad = (g0 * y[0] * y[0] - 2.0 * g1 * y[0] * y[1] + g0 * y[1] * y[1]) / det;
  double ll = -kLog2Pi - 0.5 * std::log(det) - 0.5 * quad;
  double ss = 0.0;
  for (std::size_t l = 2; l < y.size(); ++l) {
    const double e = y[l] - theta[0] * y[l - 1] - theta[1] * y[l - 2];
    ss += e * e;
  }
  ll += -0.5 * static_cast<double>(y.size() - 2) * kLog2Pi - 0.5 * ss;
  return ll;
}

std::array<double, 3> ma2_covariance(double theta1, double theta2, double sigma_eps) {
  return {1.0 + theta1 * theta1 + theta2 * theta2 + sigma_eps * sigma_eps, theta1 * (1.0 + theta2), theta2};
}

double ma2_loglik(std::span<const double> theta, std::span<const double> y, double sigma_eps) {
  if (theta.size() != 2) throw std::invalid_argument("MA(2) has two parameters");
  if (!models::in_ma2_triangle(theta[0], theta[1])) return kNegInf;
  const auto [c0, c1, c2] = ma2_covariance(theta[0], theta[1], sigma_eps);
  const std::size_t m = y.size();
  // Rows of the banded Cholesky factor: (l2, l1, l0) = L(i,i-2), L(i,i-1), L(i,i).
  std::vector<std::array<double, 3>> L(m);
  std::vector<double> z(m);
  double logdet_half = 0.0;
  double quad = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    double l2 = 0.0, l1 = 0.0;
    if (i >= 2) l2 = c2 / L[i - 2][2];
    if (i >= 1) l1 = (c1 - (i >= 2 ? l2 * L[i - 1][1] : 0.0)) / L[i - 1][2];
    const double d2 = c0 - l2 * l2 - l1 * l1;
    if (!(d2 > 0.0)) return kNegInf;
    const double l0 = std::sqrt(d2);
    L[i] = {l2, l1, l0};
    double r = y[i];
    if (i >= 1) r -= l1 * z[i - 1];
    if (i >= 2) r -= l2 * z[i - 2];
    z[i] = r / l0;
    logdet_half += std::log(l0);
    quad += z[i] * z[i];
  }
  return -0.5 * static_cast<double>(m) * kLog2Pi - logdet_half - 0.5 * quad;
}

bool gandk_invert(double x, const models::GAndKParams& p, double& z) {
  if (!(p.b > 0.0) || !(p.k >= 0.0) || !std::isfinite(x)) return false;
  constexpr double kLimit = 64.0;
  double lo = -1.0, hi = 1.0;
  while (models::gandk_quantile(lo, p) > x) {
    if (lo <= -kLimit) return false;
    lo *= 2.0;
  }
  while (models::gandk_quantile(hi, p) < x) {
    if (hi >= kLimit) return false;
    hi *= 2.0;
  }
  double cur = std::clamp((x - p.a) / p.b, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double f = models::gandk_quantile(cur, p) - x;
    if (f == 0.0) break;
    if (f < 0.0) {
      lo = cur;
    } else {
      hi = cur;
    }
    const double dq = gandk_quantile_derivative(cur, p);
    double next = cur - f / dq;
    if (!(dq > 0.0) || !(next > lo && next < hi)) next = 0.5 * (lo + hi);
    const bool done = std::abs(next - cur) <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur));
    cur = next;
    if (done || hi - lo <= 4.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(cur))) break;
  }
  z = cur;
  return true;
}

double gandk_logpdf(double x, const models::GAndKParams& p) {
  double z = 0.0;
  if (!gandk_invert(x, p, z)) return kNegInf;
  constexpr double h = 1e-6;
  const double dq = (models::gandk_quantile(z + h, p) - models::gandk_quantile(z - h, p)) / (2.0 * h);
  if (!(dq > 0.0)) return kNegInf;
  return -0.5 * z * z - 0.5 * kLog2Pi - std::log(dq);
}

double gandk_loglik(std::span<const double> theta, std::span<const double> y, double c) {
  if (theta.size() != 4) throw std::invalid_argument("g-and-k has four parameters");
  const models::GAndKParams p{theta[0], theta[1], theta[2], theta[3], c};
  if (!(p.b > 0.0) || !(p.k >= 0.0)) return kNegInf;
  double ll = 0.0;
  for (double x : y) {
    const double lp = gandk_logpdf(x, p);
    if (lp == kNegInf) return kNegInf;
    ll += lp;
  }
  return ll;
}

LogDensity log_posterior(ModelId model, std::vector<double> y) {
  const models::PriorSpec prior = models::PriorSpec::for_model(model);
  switch (model) {
    case ModelId::Ar2:
      return [prior, y = std::move(y)](std::span<const double> t) {
        const double lp = prior.log_density(t);
        return lp == kNegInf ? lp : lp + ar2_loglik(t, y);
      };
    case ModelId::Ma2:
      return [prior, y = std::move(y)](std::span<const double> t) {
        const double lp = prior.log_density(t);
        return lp == kNegInf ? lp : lp + ma2_loglik(t, y);
      };
    case ModelId::GAndK:
      return [prior, y = std::move(y)](std::span<const double> t) {
        const double lp = prior.log_density(t);
        return lp == kNegInf ? lp : lp + gandk_loglik(t, y);
      };
    case ModelId::AlphaStable: break;
  }
  throw std::invalid_argument("no tractable likelihood for the alpha-stable model");
}

// ---------------------------------------------------------- grid oracle

GridPosterior grid_posterior(ModelId model, const LogDensity& loglik, std::size_t resolution,
                             std::size_t threads) {
  if (model != ModelId::Ar2 && model != ModelId::Ma2) {
    throw std::invalid_argument("grid posteriors cover the two-parameter time-series models");
  }
  if (resolution == 0) throw std::invalid_argument("grid resolution must be positive");
  GridPosterior gp;
  gp.cell_width = 4.0 / static_cast<double>(resolution);
  gp.cell_height = 2.0 / static_cast<double>(resolution);
  std::vector<std::array<double, 2>> nodes;
  for (std::size_t i = 0; i < resolution; ++i) {
    const double t1 = -2.0 + (static_cast<double>(i) + 0.5) * gp.cell_width;
    for (std::size_t j = 0; j < resolution; ++j) {
      const double t2 = -1.0 + (static_cast<double>(j) + 0.5) * gp.cell_height;
      const bool inside = model == ModelId::Ar2 ? models::in_ar2_triangle(t1, t2) : models::in_ma2_triangle(t1, t2);
      if (inside) nodes.push_back({t1, t2});
    }
  }
  std::vector<double> ll(nodes.size());
  parallel_for(nodes.size(), threads, [&](std::size_t b, std::size_t e) {
    for (std::size_t n = b; n < e; ++n) ll[n] = loglik(nodes[n]);
  });
  const double top = *std::max_element(ll.begin(), ll.end());
  if (!std::isfinite(top)) throw std::runtime_error("grid posterior has no finite log-density");
  gp.masses.resize(nodes.size());
  for (std::size_t n = 0; n < nodes.size(); ++n) gp.masses[n] = std::exp(ll[n] - top);
  const double total = exact_sum(gp.masses);
  if (!(total > 0.0)) throw std::runtime_error("grid posterior masses are all zero");
  for (double& m : gp.masses) m /= total;
  gp.nodes.resize(static_cast<Eigen::Index>(nodes.size()), 2);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    gp.nodes(static_cast<Eigen::Index>(n), 0) = nodes[n][0];
    gp.nodes(static_cast<Eigen::Index>(n), 1) = nodes[n][1];
  }
  return gp;
}

RowMatrix sample_grid(const GridPosterior& gp, std::size_t n, Rng& rng) {
  if (gp.size() == 0) throw std::invalid_argument("empty grid posterior");
  std::vector<double> cdf(gp.size());
  std::partial_sum(gp.masses.begin(), gp.masses.end(), cdf.begin());
  std::uniform_real_distribution<double> unif(0.0, cdf.back());
  RowMatrix out(static_cast<Eigen::Index>(n), gp.nodes.cols());
  for (std::size_t r = 0; r < n; ++r) {
    const double u = unif(rng);
    auto idx = static_cast<std::size_t>(std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    idx = std::min(idx, gp.size() - 1);
    out.row(static_cast<Eigen::Index>(r)) = gp.nodes.row(static_cast<Eigen::Index>(idx));
  }
  return out;
}

std::vector<double> posterior_mean(const GridPosterior& gp) {
  std::vector<double> mean(static_cast<std::size_t>(gp.nodes.cols()), 0.0);
  for (std::size_t n = 0; n < gp.size(); ++n) {
    for (std::size_t j = 0; j < mean.size(); ++j) {
      mean[j] += gp.masses[n] * gp.nodes(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(j));
    }
  }
  return mean;
}

// -------------------------------------------------------------- Metropolis

namespace {

std::size_t metropolis_run(const LogDensity& logpost, std::vector<double>& x, double& lp, std::size_t steps,
                           std::span<const double> scale, Rng& rng, std::size_t thin,
                           std::vector<std::vector<double>>* chain) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> prop(x.size());
  std::size_t accepted = 0;
  for (std::size_t s = 0; s < steps; ++s) {
    for (std::size_t j = 0; j < x.size(); ++j) prop[j] = x[j] + scale[j] * normal(rng);
    const double lp_prop = logpost(prop);
    const double u = unif(rng);
    if (lp_prop != kNegInf && std::log(u) < lp_prop - lp) {
      x = prop;
      lp = lp_prop;
      ++accepted;
    }
    if (chain != nullptr && (s + 1) % thin == 0) chain->push_back(x);
  }
  return accepted;
}

RowMatrix to_matrix(const std::vector<std::vector<double>>& rows, std::size_t p) {
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(p));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy(rows[r].begin(), rows[r].end(), out.row(static_cast<Eigen::Index>(r)).data());
  }
  return out;
}

}  // namespace

MetropolisResult rw_metropolis(const LogDensity& logpost, std::span<const double> init, std::size_t steps,
                               std::span<const double> proposal_scale, Rng& rng, std::size_t thin) {
  if (proposal_scale.size() != init.size()) throw std::invalid_argument("one proposal scale per coordinate");
  if (thin == 0) throw std::invalid_argument("thinning interval must be positive");
  std::vector<double> x(init.begin(), init.end());
  double lp = logpost(x);
  if (!std::isfinite(lp)) throw std::invalid_argument("Metropolis start is off the support");
  std::vector<std::vector<double>> chain;
  const std::size_t acc = metropolis_run(logpost, x, lp, steps, proposal_scale, rng, thin, &chain);
  if (steps > 0 && acc == 0) throw std::runtime_error("Metropolis chain accepted no proposals; reduce the scale");
  MetropolisResult out;
  out.chain = to_matrix(chain, x.size());
  out.acceptance_rate = steps == 0 ? 0.0 : static_cast<double>(acc) / static_cast<double>(steps);
  return out;
}

MetropolisResult tuned_metropolis(const LogDensity& logpost, std::span<const double> init,
                                  std::vector<double> scale, const TunedChainConfig& cfg, Rng& rng) {
  if (scale.size() != init.size()) throw std::invalid_argument("one proposal scale per coordinate");
  std::vector<double> x(init.begin(), init.end());
  double lp = logpost(x);
  if (!std::isfinite(lp)) throw std::invalid_argument("Metropolis start is off the support");
  // A single short batch is a noisy acceptance estimate: stop only after two
  // consecutive batches land in the target band.
  std::size_t in_band = 0;
  for (std::size_t b = 0; b < cfg.tuning_batches && in_band < 2; ++b) {
    const std::size_t acc = metropolis_run(logpost, x, lp, cfg.batch_steps, scale, rng, 1, nullptr);
    const double rate = static_cast<double>(acc) / static_cast<double>(cfg.batch_steps);
    double factor = 1.0;
    if (rate < cfg.target_low) factor = rate == 0.0 ? 0.3 : 0.7;
    if (rate > cfg.target_high) factor = 1.5;
    in_band = factor == 1.0 ? in_band + 1 : 0;
    for (double& s : scale) s *= factor;
  }
  metropolis_run(logpost, x, lp, cfg.burn_in, scale, rng, 1, nullptr);
  return rw_metropolis(logpost, x, cfg.draws * cfg.thin, scale, rng, cfg.thin);
}

// ------------------------------------------------------------------ metrics

double exact_sum(std::span<const double> terms) {
  std::vector<double> partials;
  for (double x : terms) {
    std::size_t i = 0;
    for (double y : partials) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials[i++] = lo;
      x = hi;
    }
    partials.resize(i);
    partials.push_back(x);
  }
  std::size_t n = partials.size();
  if (n == 0) return 0.0;
  double hi = partials[--n];
  double lo = 0.0;
  while (n > 0) {
    const double x = hi;
    const double y = partials[--n];
    hi = x + y;
    lo = y - (hi - x);
    if (lo != 0.0) break;
  }
  // Round-half-even correction when the remaining partials push past a tie.
  if (n > 0 && ((lo < 0.0 && partials[n - 1] < 0.0) || (lo > 0.0 && partials[n - 1] > 0.0))) {
    const double y = lo * 2.0;
    const double x = hi + y;
    if (y == x - hi) hi = x;
  }
  return hi;
}

std::vector<std::size_t> hungarian(const RowMatrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw std::invalid_argument("assignment needs a square cost matrix");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Shortest augmenting path with potentials; rows/columns are 1-based here.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 1; j <= n; ++j) perm[match[j] - 1] = j - 1;
  return perm;
}

namespace {

double euclidean(const RowMatrix& a, Eigen::Index i, const RowMatrix& b, Eigen::Index j) {
  double s = 0.0;
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    const double d = a(i, c) - b(j, c);
    s += d * d;
  }
  return std::sqrt(s);
}

void push_exact_abs_difference(double x, double y, std::vector<double>& terms) {
  const double s = x - y;
  const double bv = s - x;
  const double err = (x - (s - bv)) + (-y - bv);
  if (s < 0.0) {
    terms.push_back(-s);
    terms.push_back(-err);
  } else {
    terms.push_back(s);
    terms.push_back(err);
  }
}

RowMatrix subsample(const RowMatrix& x, std::size_t m, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng = make_rng(seed, 0x7375627361ULL);
  for (std::size_t i = 0; i < m; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  RowMatrix out(static_cast<Eigen::Index>(m), x.cols());
  for (std::size_t r = 0; r < m; ++r) out.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(idx[r]));
  return out;
}

}  // namespace

double matching_cost(const RowMatrix& a, const RowMatrix& b, std::span<const std::size_t> perm) {
  const auto n = static_cast<std::size_t>(a.rows());
  if (b.rows() != a.rows() || perm.size() != n) throw std::invalid_argument("matching size mismatch");
  std::vector<double> terms;
  terms.reserve(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto c = static_cast<Eigen::Index>(perm[i]);
    if (a.cols() == 1) {
      push_exact_abs_difference(a(r, 0), b(c, 0), terms);
    } else {
      terms.push_back(euclidean(a, r, b, c));
    }
  }
  return exact_sum(terms) / static_cast<double>(n);
}

double wasserstein_assignment(const RowMatrix& a, const RowMatrix& b) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("Wasserstein distance of an empty sample");
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("sample shapes differ");
  RowMatrix cost(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      cost(i, j) = a.cols() == 1 ? std::abs(a(i, 0) - b(j, 0)) : euclidean(a, i, b, j);
    }
  }
  const std::vector<std::size_t> perm = hungarian(cost);
  return matching_cost(a, b, perm);
}

double wasserstein_1d(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw std::invalid_argument("Wasserstein distance of an empty sample");
  if (a.size() != b.size()) throw std::invalid_argument("sample sizes differ");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::vector<double> terms;
  terms.reserve(2 * sa.size());
  for (std::size_t i = 0; i < sa.size(); ++i) push_exact_abs_difference(sa[i], sb[i], terms);
  return exact_sum(terms) / static_cast<double>(sa.size());
}

double wasserstein(const RowMatrix& a, const RowMatrix& b, std::uint64_t seed) {
  if (a.rows() == 0 || b.rows() == 0) throw std::invalid_argument("Wasserstein distance of an empty sample");
  if (a.cols() != b.cols()) throw std::invalid_argument("sample dimensions differ");
  if (a.rows() > b.rows()) return wasserstein(subsample(a, static_cast<std::size_t>(b.rows()), seed), b, seed);
  if (b.rows() > a.rows()) return wasserstein(a, subsample(b, static_cast<std::size_t>(a.rows()), seed), seed);
  if (a.cols() == 1) {
    return wasserstein_1d(std::span<const double>(a.data(), static_cast<std::size_t>(a.rows())),
                          std::span<const double>(b.data(), static_cast<std::size_t>(b.rows())));
  }
  return wasserstein_assignment(a, b);
}

double rmse(const RowMatrix& estimates, std::span<const double> truth) {
  if (estimates.rows() == 0) throw std::invalid_argument("RMSE needs at least one estimate");
  if (static_cast<std::size_t>(estimates.cols()) != truth.size()) throw std::invalid_argument("dimension mismatch");
  double acc = 0.0;
  for (Eigen::Index r = 0; r < estimates.rows(); ++r) {
    for (Eigen::Index j = 0; j < estimates.cols(); ++j) {
      const double e = estimates(r, j) - truth[static_cast<std::size_t>(j)];
      acc += e * e;
    }
  }
  return std::sqrt(acc / static_cast<double>(estimates.rows()));
}

}  // namespace penabc::reference
