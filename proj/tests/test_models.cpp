// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "penabc/common.hpp"
#include "penabc/models.hpp"

using namespace penabc;
using namespace penabc::models;

namespace {

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

// Large-sample standard error of the lag-k sample autocovariance (Bartlett),
// given the true autocovariances (zero beyond the vector).
double bartlett_se(const std::vector<double>& acov, std::size_t k, std::size_t n) {
  auto g = [&](long j) {
    const auto a = static_cast<std::size_t>(std::labs(j));
    return a < acov.size() ? acov[a] : 0.0;
  };
  const long span = static_cast<long>(acov.size()) + static_cast<long>(k) + 1;
  double s = 0.0;
  for (long j = -span; j <= span; ++j) s += g(j) * g(j) + g(j + static_cast<long>(k)) * g(j - static_cast<long>(k));
  return std::sqrt(s / static_cast<double>(n));
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("prior draws stay in their support") {
  for (ModelId m : {ModelId::GAndK, ModelId::AlphaStable, ModelId::Ar2, ModelId::Ma2}) {
    const PriorSpec prior = PriorSpec::for_model(m);
    Rng rng(derive_seed(11, static_cast<std::uint64_t>(m)));
    for (int i = 0; i < 100000; ++i) {
      const ParamVector t = sample_prior(prior, rng);
      REQUIRE(t.size() == param_dim(m));
      REQUIRE(prior.in_support(t.values));
      REQUIRE(std::isfinite(prior.log_density(t.values)));
    }
  }
}

TEST_CASE("AR2 prior respects the triangle") {
  Rng rng(3);
  const PriorSpec prior = PriorSpec::for_model(ModelId::Ar2);
  for (int i = 0; i < 10000; ++i) {
    const ParamVector t = sample_prior(prior, rng);
    CHECK(t[1] < 1.0 + t[0]);
    CHECK(t[1] < 1.0 - t[0]);
    CHECK(t[1] > -1.0);
  }
  CHECK_FALSE(in_ar2_triangle(0.0, 1.5));
  CHECK_FALSE(in_ar2_triangle(0.0, -1.5));
  CHECK(in_ar2_triangle(0.2, -0.13));
}

TEST_CASE("alpha-stable prior components are standard normal") {
  Rng rng(5);
  const PriorSpec prior = PriorSpec::for_model(ModelId::AlphaStable);
  const int n = 100000;
  std::vector<std::vector<double>> cols(4);
  for (int i = 0; i < n; ++i) {
    const ParamVector t = sample_prior(prior, rng);
    for (std::size_t c = 0; c < 4; ++c) cols[c].push_back(t[c]);
  }
  for (const auto& c : cols) {
    CHECK(std::abs(mean(c)) < 4.0 / std::sqrt(n));
    CHECK(std::abs(variance(c) - 1.0) < 4.0 * std::sqrt(2.0 / n));
  }
}

TEST_CASE("seeded prior draws are reproducible") {
  const PriorSpec prior = PriorSpec::for_model(ModelId::GAndK);
  Rng a(99), b(99);
  CHECK(sample_prior(prior, a) == sample_prior(prior, b));
}

TEST_CASE("g-and-k quantile function") {
  const GAndKParams p{3.0, 1.0, 2.0, 0.5};
  CHECK(gandk_quantile(0.0, p) == 3.0);
  // Closed form at z = 1: A + B (1 + c tanh(g/2)) (1 + 1)^k.
  const double expected = 3.0 + (1.0 + 0.8 * std::tanh(1.0)) * std::sqrt(2.0);
  CHECK(gandk_quantile(1.0, p) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(gandk_quantile(1.0, p) == doctest::Approx(5.2759).epsilon(1e-4));
}

TEST_CASE("g-and-k with g = k = 0 is normal") {
  Rng rng(17);
  const ParamVector theta{ModelId::GAndK, {3.0, 2.0, 0.0, 0.0}};
  const std::size_t n = 100000;
  const Series y = simulate_gandk(theta, n, rng);
  const double se_mean = 2.0 / std::sqrt(static_cast<double>(n));
  const double se_var = 4.0 * std::sqrt(2.0 / static_cast<double>(n));
  CHECK(std::abs(mean(y) - 3.0) < 3.0 * se_mean);
  CHECK(std::abs(variance(y) - 4.0) < 3.0 * se_var);
}

TEST_CASE("g-and-k rejects invalid parameters") {
  Rng rng(1);
  CHECK_THROWS_AS(simulate_gandk(ParamVector{ModelId::GAndK, {3.0, 0.0, 2.0, 0.5}}, 10, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(simulate_gandk(ParamVector{ModelId::GAndK, {3.0, 1.0, 2.0, -0.1}}, 10, rng),
                  std::invalid_argument);
}

TEST_CASE("alpha-stable parameter transform") {
  CHECK(transform_alpha_params({1.55, 0.0, 1.0, 0.0})[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(transform_alpha_params({1.55, 0.0, 1.0, 0.0})[0]) < 1e-12);
  CHECK(transform_alpha_params({1.5, 0.0, 1.0, 0.0})[0] == doctest::Approx(std::log(0.4 / 0.5)).epsilon(1e-14));
  CHECK(transform_alpha_params({1.5, 0.0, 1.0, 0.0})[0] == doctest::Approx(-0.22314).epsilon(1e-4));
  CHECK(transform_alpha_params({1.5, 0.0, 1.0, 0.7})[3] == 0.7);

  Rng rng(23);
  std::normal_distribution<double> z;
  for (int i = 0; i < 10000; ++i) {
    const ParamVector t{ModelId::AlphaStable, {z(rng), z(rng), z(rng), z(rng)}};
    const ParamVector back = transform_alpha_params(inverse_transform_alpha_params(t));
    for (std::size_t c = 0; c < 4; ++c) {
      CHECK(std::abs(back[c] - t[c]) <= 1e-12 * std::max(1.0, std::abs(t[c])));
    }
  }
}

TEST_CASE("alpha-stable near alpha = 2 is N(delta, 2 gamma^2)") {
  Rng rng(29);
  const ParamVector tilde{ModelId::AlphaStable, {30.0, 0.8, std::log(1.5), 0.4}};
  const Series y = simulate_alpha_stable(tilde, 100000, rng);
  CHECK(std::abs(variance(y) - 2.0 * 1.5 * 1.5) < 0.05 * 2.0 * 1.5 * 1.5);
  CHECK(std::abs(mean(y) - 0.4) < 0.05);
}

TEST_CASE("symmetric alpha-stable draws are symmetric") {
  Rng rng(31);
  // Near-Gaussian case: moments exist, so the skewness standard error is sqrt(6/n).
  const std::size_t n = 100000;
  const Series g = simulate_alpha_stable(ParamVector{ModelId::AlphaStable, {30.0, 0.0, 0.0, 0.0}}, n, rng);
  CHECK(std::abs(sample_skewness(g)) < 3.0 * std::sqrt(6.0 / static_cast<double>(n)));

  // Heavy tails: compare mirrored quantiles instead of moments.
  Series h = simulate_alpha_stable(AlphaStableParams{1.5, 0.0, 1.0, 0.0}, n, rng);
  std::sort(h.begin(), h.end());
  for (double p : {0.05, 0.1, 0.25, 0.4}) {
    const double lo = quantile_sorted(h, p);
    const double hi = quantile_sorted(h, 1.0 - p);
    CHECK(std::abs(lo + hi) < 0.05 * (hi - lo));
  }
}

TEST_CASE("alpha-stable draws match the characteristic function") {
  // phi(t) = exp(i delta t - gamma^a |t|^a (1 + i beta tan(pi a/2) sgn(t) (|gamma t|^(1-a) - 1)))
  const AlphaStableParams p{1.5, 0.5, 1.0, 0.0};
  auto phi = [&](double t) {
    using namespace std::complex_literals;
    const double s = t > 0 ? 1.0 : -1.0;
    const double tn = std::tan(oracle::kPi * p.alpha / 2.0);
    return std::exp(1i * p.delta * t -
                    std::pow(p.gamma * std::abs(t), p.alpha) *
                        (1.0 + 1i * p.beta * tn * s * (std::pow(p.gamma * std::abs(t), 1.0 - p.alpha) - 1.0)));
  };
  Rng rng(37);
  const std::size_t n = 200000;
  const Series y = simulate_alpha_stable(p, n, rng);
  for (double t : {-1.5, -0.5, 0.25, 0.7, 1.3, 2.0}) {
    std::complex<double> emp = 0.0;
    for (double v : y) emp += std::exp(std::complex<double>(0.0, t * v));
    emp /= static_cast<double>(n);
    CHECK(std::abs(emp - phi(t)) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(alpha_stable_cf(t, p) - phi(t)) < 1e-14);
  }
}

TEST_CASE("AR2 simulation") {
  SUBCASE("zero coefficients give white noise") {
    Rng rng(41);
    const std::size_t n = 100000;
    const Series y = simulate_ar2(ParamVector{ModelId::Ar2, {0.0, 0.0}}, n, rng);
    CHECK(std::abs(autocovariance(y, 1)) < 3.0 / std::sqrt(static_cast<double>(n)));
  }
  SUBCASE("stationary autocovariances match Yule-Walker") {
    Rng rng(43);
    const std::size_t n = 1000000;
    const Series y = simulate_ar2(ParamVector{ModelId::Ar2, {0.2, -0.13}}, n, rng);
    const auto acov = oracle::ar2_autocov(0.2, -0.13, 60);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::abs(autocovariance(y, k) - acov[k]) < 3.0 * bartlett_se(acov, k, n));
    }
    const auto [g0, g1] = ar2_stationary_covariance(0.2, -0.13);
    CHECK(g0 == doctest::Approx(acov[0]).epsilon(1e-12));
    CHECK(g1 == doctest::Approx(acov[1]).epsilon(1e-12));
  }
  SUBCASE("seeded runs are identical") {
    Rng a(7), b(7);
    const ParamVector t{ModelId::Ar2, {0.2, -0.13}};
    CHECK(simulate_ar2(t, 100, a) == simulate_ar2(t, 100, b));
  }
}

TEST_CASE("noisy MA2 simulation") {
  SUBCASE("zero coefficients give N(0, 1 + sigma^2)") {
    Rng rng(47);
    const std::size_t n = 100000;
    const Series y = simulate_ma2_noisy(ParamVector{ModelId::Ma2, {0.0, 0.0}}, n, rng);
    CHECK(std::abs(variance(y) - 1.09) < 3.0 * 1.09 * std::sqrt(2.0 / static_cast<double>(n)));
  }
  SUBCASE("autocovariances match the MA algebra") {
    // (1 + t1^2 + t2^2 + s^2, t1 (1 + t2), t2) = (1.49, 0.72, 0.20)
    const std::vector<double> acov{1.0 + 0.36 + 0.04 + 0.09, 0.6 * 1.2, 0.2};
    CHECK(acov[0] == doctest::Approx(1.49));
    CHECK(acov[1] == doctest::Approx(0.72));
    Rng rng(53);
    const std::size_t n = 1000000;
    const Series y = simulate_ma2_noisy(ParamVector{ModelId::Ma2, {0.6, 0.2}}, n, rng);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(std::abs(autocovariance(y, k) - acov[k]) < 3.0 * bartlett_se(acov, k, n));
    }
  }
}

TEST_CASE("handpicked summaries") {
  SUBCASE("constant series has zero autocovariances") {
    const std::vector<double> y(50, 4.2);
    for (double v : handpicked_summaries(ModelId::Ar2, y)) CHECK(v == 0.0);
  }
  SUBCASE("type-7 percentiles on 1..1000") {
    std::vector<double> y(1000);
    std::iota(y.begin(), y.end(), 1.0);
    const auto s = handpicked_summaries(ModelId::GAndK, y);
    REQUIRE(s.size() == 5);
    CHECK(s[0] == doctest::Approx(200.8).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(400.6).epsilon(1e-14));
    CHECK(s[2] == doctest::Approx(600.4).epsilon(1e-14));
    CHECK(s[3] == doctest::Approx(800.2).epsilon(1e-14));
    CHECK(std::abs(s[4]) < 1e-12);
  }
  SUBCASE("lag-1 autocovariance with divisor M") {
    const std::vector<double> y{1.0, 2.0, 3.0};
    CHECK(autocovariance(y, 1) == doctest::Approx(0.0));
    CHECK(autocovariance(y, 0) == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("g-and-k summaries ignore the order of y") {
    Rng rng(59);
    Series y = simulate_gandk(ground_truth(ModelId::GAndK), 1000, rng);
    const auto before = handpicked_summaries(ModelId::GAndK, y);
    std::shuffle(y.begin(), y.end(), rng);
    CHECK(handpicked_summaries(ModelId::GAndK, y) == before);
  }
  SUBCASE("dimensions") {
    Rng rng(61);
    for (ModelId m : {ModelId::GAndK, ModelId::AlphaStable, ModelId::Ar2, ModelId::Ma2}) {
      const Series y = simulate_observation(ground_truth(m), default_series_length(m), rng);
      CHECK(handpicked_summaries(m, y).size() == handpicked_dim(m));
    }
  }
}

TEST_CASE("outlier cleaning") {
  Rng rng(67);
  SUBCASE("in-range data is untouched") {
    const std::vector<double> y{1.0, -3.0, 49.0, 0.0};
    CHECK(clean_outliers(y, -10.0, 50.0, rng) == y);
  }
  SUBCASE("outliers are replaced inside the in-range span") {
    const std::vector<double> y{0.0, 100.0, 5.0};
    for (int i = 0; i < 100; ++i) {
      const auto out = clean_outliers(y, -10.0, 50.0, rng);
      CHECK(out[0] == 0.0);
      CHECK(out[2] == 5.0);
      CHECK(out[1] >= 0.0);
      CHECK(out[1] <= 5.0);
    }
  }
  SUBCASE("heavy-tailed draws end up within the window, idempotently") {
    const Series raw = simulate_alpha_stable(ground_truth(ModelId::AlphaStable), 10000, rng);
    const Series y = clean_outliers(raw, -10.0, 50.0, rng);
    CHECK(*std::min_element(y.begin(), y.end()) >= -10.0);
    CHECK(*std::max_element(y.begin(), y.end()) <= 50.0);
    CHECK(clean_outliers(y, -10.0, 50.0, rng) == y);
  }
  SUBCASE("window must be ordered") {
    CHECK_THROWS_AS(clean_outliers(std::vector<double>{1.0}, 5.0, 5.0, rng), std::invalid_argument);
  }
}

TEST_CASE("robust scaling") {
  const std::vector<double> y{0.0, 1.0, 2.0, 3.0, 4.0};
  const RobustScaled r = robust_scale(y);
  CHECK(r.q1 == 1.0);
  CHECK(r.q3 == 3.0);
  const std::vector<double> expected{0.5, 1.0, 1.5, 2.0, 2.5};
  CHECK(r.scaled == expected);
  const RobustScaled c = robust_scale(y, RobustScaleSign::Conventional);
  const std::vector<double> conventional{-0.5, 0.0, 0.5, 1.0, 1.5};
  CHECK(c.scaled == conventional);
  CHECK_THROWS_AS(robust_scale(std::vector<double>(10, 1.0)), std::invalid_argument);
}

TEST_CASE("empirical distribution features") {
  const std::vector<double> y{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> grid{0.0, 2.5, 4.0, 9.0};
  const auto f = ecdf_features(y, grid);
  CHECK(f[0] == 0.0);
  CHECK(f[1] == 0.5);
  CHECK(f[2] == 1.0);
  CHECK(f[3] == 1.0);

  Rng rng(71);
  Series z = simulate_gandk(ground_truth(ModelId::GAndK), 1000, rng);
  const auto g = PreprocessSpec::for_model(ModelId::GAndK).ecdf_grid;
  REQUIRE(g.size() == 100);
  CHECK(std::is_sorted(g.begin(), g.end()));
  const auto before = ecdf_features(z, g);
  std::shuffle(z.begin(), z.end(), rng);
  CHECK(ecdf_features(z, g) == before);
}

TEST_CASE("ground truth and series lengths") {
  CHECK(ground_truth(ModelId::GAndK).values == std::vector<double>{3.0, 1.0, 2.0, 0.5});
  CHECK(ground_truth(ModelId::Ar2).values == std::vector<double>{0.2, -0.13});
  const auto a = inverse_transform_alpha_params(ground_truth(ModelId::AlphaStable));
  CHECK(a.alpha == doctest::Approx(1.5));
  CHECK(a.beta == doctest::Approx(0.5));
  CHECK(a.gamma == doctest::Approx(1.0));
  CHECK(a.delta == doctest::Approx(0.0));
  CHECK(default_series_length(ModelId::GAndK) == 1000);
  CHECK(default_series_length(ModelId::AlphaStable) == 1000);
  CHECK(default_series_length(ModelId::Ar2) == 100);
  CHECK(default_series_length(ModelId::Ma2) == 100);
  CHECK(param_dim(ModelId::GAndK) == 4);
  CHECK(param_dim(ModelId::Ma2) == 2);
  CHECK(parse_model(model_name(ModelId::Ma2)) == ModelId::Ma2);
}

}  // TEST_SUITE
