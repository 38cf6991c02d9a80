// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "penabc/pen.hpp"
#include "penabc/presets.hpp"

using namespace penabc;
using namespace penabc::pen;

namespace {

PenSpec small_pen(std::size_t d, std::size_t extra = 0) {
  PenSpec s;
  s.d = d;
  s.extra_dim = extra;
  s.inner = nn::parse_layers(std::to_string(d + 1) + "x6:relu, 6x4:linear");
  s.outer = nn::parse_layers(std::to_string(d + 4 + extra) + "x5:relu, 5x2:linear");
  return s;
}

std::vector<double> normal_series(std::size_t m, Rng& rng) {
  std::normal_distribution<double> z;
  std::vector<double> y(m);
  for (auto& v : y) v = z(rng);
  return y;
}

// Two-stage recomputation: inner net on every window, plain sum, outer net on
// [prefix, pooled, extras].
std::vector<double> two_stage(const PenSpec& s, const PenWeights& w, const std::vector<double>& y,
                              const std::vector<double>& extras) {
  std::vector<double> pooled(s.latent_dim(), 0.0);
  for (std::size_t i = 0; i + s.d < y.size(); ++i) {
    const std::vector<double> win(y.begin() + static_cast<std::ptrdiff_t>(i),
                                  y.begin() + static_cast<std::ptrdiff_t>(i + s.d + 1));
    const auto h = oracle::mlp(s.inner, w.inner, win);
    for (std::size_t c = 0; c < h.size(); ++c) pooled[c] += h[c];
  }
  std::vector<double> in(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(s.d));
  in.insert(in.end(), pooled.begin(), pooled.end());
  in.insert(in.end(), extras.begin(), extras.end());
  return oracle::mlp(s.outer, w.outer, in);
}

}  // namespace

TEST_SUITE("pen") {

TEST_CASE("windows") {
  const std::vector<double> y{1, 2, 3, 4};
  const RowMatrix w = windows(y, 2);
  REQUIRE(w.rows() == 2);
  REQUIRE(w.cols() == 3);
  CHECK(w(0, 0) == 1);
  CHECK(w(0, 2) == 3);
  CHECK(w(1, 0) == 2);
  CHECK(w(1, 2) == 4);
  const RowMatrix s = windows(y, 0);
  CHECK(s.rows() == 4);
  CHECK(s.cols() == 1);
  CHECK_THROWS(windows(y, 4));
}

TEST_CASE("spec validation") {
  PenSpec s = small_pen(2);
  CHECK_NOTHROW(s.validate());
  s.inner = nn::parse_layers("2x6:relu, 6x4:linear");
  CHECK_THROWS(s.validate());
  PenSpec t = small_pen(1, 2);
  t.outer = nn::parse_layers("5x5:relu, 5x2:linear");
  CHECK_THROWS(t.validate());
}

TEST_CASE("forward pass") {
  SUBCASE("DeepSets reduction sums its inputs") {
    PenSpec s;
    s.d = 0;
    s.inner = nn::parse_layers("1x1:linear");
    s.outer = nn::parse_layers("1x1:linear");
    PenWeights w = zero_weights(s);
    w.inner.layers[0].weight(0, 0) = 1.0;
    w.outer.layers[0].weight(0, 0) = 0.5;
    std::vector<double> y{0.25, 1.5, -3.0, 8.0, 0.125};
    const double expected = 0.5 * (0.25 + 1.5 - 3.0 + 8.0 + 0.125);
    CHECK(pen_forward(s, w, y)(0) == doctest::Approx(expected).epsilon(1e-15));
    std::vector<double> r{8.0, 0.125, 1.5, 0.25, -3.0};
    CHECK(pen_forward(s, w, r, {}, nullptr, Pooling::Canonical)(0) ==
          pen_forward(s, w, y, {}, nullptr, Pooling::Canonical)(0));
  }
  SUBCASE("zero inner weights make the output depend only on the prefix") {
    Rng rng(2);
    const PenSpec s = small_pen(2);
    PenWeights w = init_weights(s, rng);
    for (auto& l : w.inner.layers) l.weight.setZero();
    std::vector<double> a = normal_series(20, rng);
    std::vector<double> b = normal_series(20, rng);
    b[0] = a[0];
    b[1] = a[1];
    const auto fa = pen_forward(s, w, a);
    const auto fb = pen_forward(s, w, b);
    CHECK((fa - fb).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("agrees with a two-stage recomputation") {
    Rng rng(3);
    for (std::size_t d : {0u, 1u, 2u, 5u}) {
      for (std::size_t extra : {0u, 2u}) {
        const PenSpec s = small_pen(d, extra);
        const PenWeights w = init_weights(s, rng);
        const auto y = normal_series(30, rng);
        const auto ex = normal_series(extra, rng);
        const Eigen::VectorXd got = pen_forward(s, w, y, ex);
        const auto want = two_stage(s, w, y, ex);
        for (std::size_t o = 0; o < want.size(); ++o) {
          CHECK(std::abs(got(static_cast<Eigen::Index>(o)) - want[o]) < 1e-12);
        }
      }
    }
  }
  SUBCASE("batch forward equals row-wise forward") {
    Rng rng(4);
    const PenSpec s = small_pen(1, 2);
    const PenWeights w = init_weights(s, rng);
    Eigen::MatrixXd x(5, 17);
    for (Eigen::Index r = 0; r < 5; ++r) {
      const auto row = normal_series(17, rng);
      for (Eigen::Index c = 0; c < 17; ++c) x(r, c) = row[static_cast<std::size_t>(c)];
    }
    const Eigen::MatrixXd batch = forward_batch(s, w, x);
    for (Eigen::Index r = 0; r < 5; ++r) {
      std::vector<double> y(15), ex(2);
      for (Eigen::Index c = 0; c < 15; ++c) y[static_cast<std::size_t>(c)] = x(r, c);
      ex[0] = x(r, 15);
      ex[1] = x(r, 16);
      CHECK((batch.row(r).transpose() - pen_forward(s, w, y, ex)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("gradients") {
  Rng rng(5);
  SUBCASE("zero upstream gradient") {
    const PenSpec s = small_pen(2);
    const PenWeights w = init_weights(s, rng);
    PenCache cache;
    pen_forward(s, w, normal_series(12, rng), {}, &cache);
    for (double v : flatten(pen_backward(s, w, cache, Eigen::VectorXd::Zero(2)))) CHECK(v == 0.0);
  }
  SUBCASE("central differences") {
    for (std::size_t d : {0u, 1u, 2u, 10u}) {
      const PenSpec s = small_pen(d, d == 1 ? 2 : 0);
      const std::size_t m = 24;
      PenRegressor net(s, m, rng);
      Eigen::MatrixXd x(4, static_cast<Eigen::Index>(m + s.extra_dim));
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = normal_series(1, rng)[0];
      Eigen::MatrixXd target(4, 2);
      for (Eigen::Index r = 0; r < 4; ++r) target.row(r) << normal_series(1, rng)[0], normal_series(1, rng)[0];
      CHECK(oracle::gradient_mismatches(net, x, target, 1e-4, 1e-6) == 0);
    }
  }
}

TEST_CASE("block switches") {
  const std::vector<double> y{7, 1, 9, 5, 7, 2, 9, 3};
  const BlockSwitchIndices b{0, 2, 4, 6};
  SUBCASE("worked example") {
    CHECK(block_switch_applies(y, 1, b));
    CHECK(block_switch(y, 1, b) == std::vector<double>{7, 2, 9, 5, 7, 1, 9, 3});
  }
  SUBCASE("failed guard leaves the series alone") {
    const std::vector<double> z{7, 1, 9, 5, 6, 2, 9, 3};
    CHECK_FALSE(block_switch_applies(z, 1, b));
    CHECK(block_switch(z, 1, b) == z);
  }
  SUBCASE("involution and multiset preservation") {
    Rng rng(6);
    for (int t = 0; t < 200; ++t) {
      std::vector<double> s = normal_series(30, rng);
      const std::size_t d = static_cast<std::size_t>(t % 3);
      std::uniform_int_distribution<std::size_t> len(std::max<std::size_t>(2 * d, d + 1), 8);
      const std::size_t l1 = len(rng), l2 = len(rng);
      const std::size_t i = std::uniform_int_distribution<std::size_t>(0, 3)(rng);
      const std::size_t k = i + l1 + std::uniform_int_distribution<std::size_t>(0, 5)(rng);
      const BlockSwitchIndices idx{i, i + l1 - 1, k, k + l2 - 1};
      for (std::size_t u = 0; u < d; ++u) {
        s[idx.k + u] = s[idx.i + u];
        s[idx.l - u] = s[idx.j - u];
      }
      REQUIRE(block_switch_applies(s, d, idx));
      const auto once = block_switch(s, d, idx);
      CHECK(block_switch(once, d, after_switch(idx)) == s);
      auto a = s, c = once;
      std::sort(a.begin(), a.end());
      std::sort(c.begin(), c.end());
      CHECK(a == c);
    }
  }
  SUBCASE("index validation") {
    CHECK_THROWS(block_switch(y, 1, BlockSwitchIndices{0, 0, 4, 6}));
    CHECK_THROWS(block_switch(y, 0, BlockSwitchIndices{0, 4, 3, 6}));
    CHECK_THROWS(block_switch(y, 0, BlockSwitchIndices{0, 1, 4, 8}));
  }
}

TEST_CASE("invariance") {
  Rng rng(7);
  for (std::size_t d : {0u, 1u, 2u, 10u}) {
    const PenSpec s = small_pen(d);
    const PenWeights w = init_weights(s, rng);
    const SeriesFunction f = [&](std::span<const double> y) {
      const Eigen::VectorXd o = pen_forward(s, w, y);
      return std::vector<double>(o.data(), o.data() + o.size());
    };
    const SeriesFunction exact = [&](std::span<const double> y) {
      const Eigen::VectorXd o = pen_forward(s, w, y, {}, nullptr, Pooling::Canonical);
      return std::vector<double>(o.data(), o.data() + o.size());
    };
    const auto r = check_block_switch_invariance(f, 60, d, 200, rng);
    CHECK(r.max_rel_discrepancy <= 1e-9);
    CHECK(r.applied > 150);
    CHECK(check_block_switch_invariance(exact, 60, d, 200, rng).max_rel_discrepancy == 0.0);
  }
  const PenSpec s0 = small_pen(0);
  const PenWeights w0 = init_weights(s0, rng);
  const SeriesFunction f0 = [&](std::span<const double> y) {
    const Eigen::VectorXd o = pen_forward(s0, w0, y);
    return std::vector<double>(o.data(), o.data() + o.size());
  };
  CHECK(check_permutation_invariance(f0, 50, 200, rng).max_rel_discrepancy <= 1e-9);

  // A plain MLP on the raw series is not invariant; the size of the gap is informational.
  const nn::MlpSpec mlp = nn::parse_layers("60x8:relu, 8x2:linear");
  const nn::MlpWeights mw = nn::init_weights(mlp, rng);
  const SeriesFunction g = [&](std::span<const double> y) {
    return oracle::mlp(mlp, mw, std::vector<double>(y.begin(), y.end()));
  };
  const auto rm = check_block_switch_invariance(g, 60, 2, 100, rng);
  MESSAGE("plain MLP block-switch discrepancy: " << rm.max_rel_discrepancy);
}

TEST_CASE("published PEN weight counts") {
  using models::ModelId;
  CHECK(count_weights(presets::pen_spec(ModelId::Ar2, 0)) == 9922);
  CHECK(count_weights(presets::pen_spec(ModelId::Ar2, 2)) == 10222);
  CHECK(count_weights(presets::pen_spec(ModelId::GAndK, 0)) == 22214);
  CHECK(count_weights(presets::pen_spec(ModelId::AlphaStable, 0)) == 23924);
  CHECK(count_weights(presets::pen_spec(ModelId::Ma2, 10)) == 11422);
  CHECK(count_weights(presets::pen_spec(ModelId::Ma2, 0)) == 9922);
  const PenSpec alpha = presets::pen_spec(ModelId::AlphaStable, 0);
  CHECK(alpha.extra_dim == 2);
  CHECK(alpha.outer.input_dim() == 22);
}

}  // TEST_SUITE
