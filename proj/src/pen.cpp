// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/pen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace penabc::pen {

namespace {

// Window rows per inner-network GEMM, and the largest batch whose inner
// activations are kept for the backward pass.
constexpr std::size_t kChunkRows = 8192;
constexpr std::size_t kKeepRows = 32768;

struct Layout {
  std::size_t series_len;
  std::size_t n_windows;
  std::size_t batch;
  std::size_t samples_per_chunk;

  std::size_t chunks() const { return (batch + samples_per_chunk - 1) / samples_per_chunk; }
};

Layout layout_for(const PenSpec& spec, const Eigen::MatrixXd& x) {
  const auto cols = static_cast<std::size_t>(x.cols());
  if (cols < spec.extra_dim + spec.d + 1) {
    throw std::invalid_argument("PEN input too short: need M > d values plus " +
                                std::to_string(spec.extra_dim) + " extra features");
  }
  Layout lay{};
  lay.series_len = cols - spec.extra_dim;
  lay.n_windows = lay.series_len - spec.d;
  lay.batch = static_cast<std::size_t>(x.rows());
  lay.samples_per_chunk = std::max<std::size_t>(1, kChunkRows / lay.n_windows);
  return lay;
}

Eigen::MatrixXd window_block(const Eigen::MatrixXd& x, std::size_t s0, std::size_t s1,
                             const Layout& lay, std::size_t d) {
  Eigen::MatrixXd win(static_cast<Eigen::Index>((s1 - s0) * lay.n_windows),
                      static_cast<Eigen::Index>(d + 1));
  for (std::size_t t = 0; t <= d; ++t) {
    auto col = win.col(static_cast<Eigen::Index>(t));
    for (std::size_t s = s0; s < s1; ++s) {
      const std::size_t base = (s - s0) * lay.n_windows;
      for (std::size_t i = 0; i < lay.n_windows; ++i) {
        col(static_cast<Eigen::Index>(base + i)) =
            x(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(i + t));
      }
    }
  }
  return win;
}

// One window at a time with fixed loop order, so a window's latent does not
// depend on where it sits in the batch (blocked matrix kernels do not promise that).
Eigen::MatrixXd inner_rowwise(const nn::MlpSpec& spec, const nn::MlpWeights& w, const Eigen::MatrixXd& win) {
  Eigen::MatrixXd out(win.rows(), static_cast<Eigen::Index>(spec.output_dim()));
  std::vector<double> cur, next;
  for (Eigen::Index r = 0; r < win.rows(); ++r) {
    cur.assign(static_cast<std::size_t>(win.cols()), 0.0);
    for (Eigen::Index c = 0; c < win.cols(); ++c) cur[static_cast<std::size_t>(c)] = win(r, c);
    for (std::size_t l = 0; l < spec.layers.size(); ++l) {
      const auto& L = spec.layers[l];
      next.assign(L.out_dim, 0.0);
      for (std::size_t o = 0; o < L.out_dim; ++o) {
        double acc = w.layers[l].bias(static_cast<Eigen::Index>(o));
        for (std::size_t i = 0; i < L.in_dim; ++i) {
          acc += w.layers[l].weight(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * cur[i];
        }
        next[o] = (L.activation == nn::Activation::Relu && acc < 0.0) ? 0.0 : acc;
      }
      cur.swap(next);
    }
    for (std::size_t o = 0; o < cur.size(); ++o) out(r, static_cast<Eigen::Index>(o)) = cur[o];
  }
  return out;
}

double pool_segment(const double* begin, std::size_t n, Pooling pooling, std::vector<double>& scratch) {
  CompensatedSum acc;
  if (pooling == Pooling::Canonical) {
    scratch.assign(begin, begin + n);
    std::sort(scratch.begin(), scratch.end());
    for (double v : scratch) acc.add(v);
  } else {
    for (std::size_t i = 0; i < n; ++i) acc.add(begin[i]);
  }
  return acc.value();
}

}  // namespace

void PenSpec::validate() const {
  inner.validate();
  outer.validate();
  if (inner.input_dim() != d + 1) {
    throw std::invalid_argument("inner network input must be d + 1 = " + std::to_string(d + 1));
  }
  if (outer.input_dim() != d + latent_dim() + extra_dim) {
    throw std::invalid_argument("outer network input must be d + latent + extra = " +
                                std::to_string(d + latent_dim() + extra_dim));
  }
  if (outer.layers.back().activation != nn::Activation::Linear) {
    throw std::invalid_argument("outer network must end with a linear layer");
  }
}

std::size_t count_weights(const PenSpec& spec) {
  spec.validate();
  return nn::count_weights(spec.inner) + nn::count_weights(spec.outer);
}

PenWeights init_weights(const PenSpec& spec, Rng& rng) {
  spec.validate();
  PenWeights w;
  w.inner = nn::init_weights(spec.inner, rng);
  w.outer = nn::init_weights(spec.outer, rng);
  return w;
}

PenWeights zero_weights(const PenSpec& spec) {
  spec.validate();
  return {nn::zero_weights(spec.inner), nn::zero_weights(spec.outer)};
}

std::vector<double> flatten(const PenWeights& w) {
  std::vector<double> out;
  out.reserve(w.num_params());
  nn::append_flat(w.inner, out);
  nn::append_flat(w.outer, out);
  return out;
}

void assign_flat(PenWeights& w, std::span<const double> flat) {
  if (flat.size() != w.num_params()) throw std::invalid_argument("PEN parameter count mismatch");
  const std::size_t offset = nn::assign_flat(w.inner, flat, 0);
  nn::assign_flat(w.outer, flat, offset);
}

RowMatrix windows(std::span<const double> y, std::size_t d) {
  if (y.size() <= d) {
    throw std::invalid_argument("series of length " + std::to_string(y.size()) +
                                " has no windows of order " + std::to_string(d));
  }
  const std::size_t n = y.size() - d;
  RowMatrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d + 1));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t t = 0; t <= d; ++t) {
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) = y[i + t];
    }
  }
  return out;
}

Eigen::MatrixXd forward_batch(const PenSpec& spec, const PenWeights& w, const Eigen::MatrixXd& x,
                              Pooling pooling, PenCache* cache) {
  spec.validate();
  const Layout lay = layout_for(spec, x);
  const std::size_t latent = spec.latent_dim();
  const auto d = spec.d;
  const bool keep_inner = cache != nullptr && lay.batch * lay.n_windows <= kKeepRows;

  Eigen::MatrixXd outer_in(static_cast<Eigen::Index>(lay.batch),
                           static_cast<Eigen::Index>(d + latent + spec.extra_dim));
  if (d > 0) outer_in.leftCols(static_cast<Eigen::Index>(d)) = x.leftCols(static_cast<Eigen::Index>(d));
  if (spec.extra_dim > 0) {
    outer_in.rightCols(static_cast<Eigen::Index>(spec.extra_dim)) =
        x.rightCols(static_cast<Eigen::Index>(spec.extra_dim));
  }
  if (cache) {
    cache->series_len = lay.series_len;
    cache->batch = lay.batch;
    cache->samples_per_chunk = lay.samples_per_chunk;
    cache->input = x;
    cache->inner.clear();
    if (keep_inner) cache->inner.resize(lay.chunks());
  }

  std::vector<double> scratch;
  for (std::size_t c = 0; c < lay.chunks(); ++c) {
    const std::size_t s0 = c * lay.samples_per_chunk;
    const std::size_t s1 = std::min(lay.batch, s0 + lay.samples_per_chunk);
    const Eigen::MatrixXd win = window_block(x, s0, s1, lay, d);
    Eigen::MatrixXd lat;
    if (pooling == Pooling::Canonical) {
      lat = inner_rowwise(spec.inner, w.inner, win);
      if (keep_inner) nn::forward(spec.inner, w.inner, win, &cache->inner[c]);
    } else {
      lat = nn::forward(spec.inner, w.inner, win, keep_inner ? &cache->inner[c] : nullptr);
    }
    for (std::size_t j = 0; j < latent; ++j) {
      const double* column = lat.col(static_cast<Eigen::Index>(j)).data();
      for (std::size_t s = s0; s < s1; ++s) {
        outer_in(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(d + j)) =
            pool_segment(column + (s - s0) * lay.n_windows, lay.n_windows, pooling, scratch);
      }
    }
  }
  return nn::forward(spec.outer, w.outer, outer_in, cache ? &cache->outer : nullptr);
}

void backward_batch(const PenSpec& spec, const PenWeights& w, const PenCache& cache,
                    const Eigen::MatrixXd& grad_out, PenWeights& grad) {
  if (cache.batch == 0 || cache.outer.post.empty()) {
    throw std::invalid_argument("PEN backward needs the cache of a forward pass");
  }
  if (static_cast<std::size_t>(grad_out.rows()) != cache.batch ||
      static_cast<std::size_t>(grad_out.cols()) != spec.outer.output_dim()) {
    throw std::invalid_argument("PEN backward: output gradient has the wrong shape");
  }
  Eigen::MatrixXd outer_in_grad;
  nn::backward(spec.outer, w.outer, cache.outer, grad_out, grad.outer, &outer_in_grad);

  const Layout lay{cache.series_len, cache.series_len - spec.d, cache.batch, cache.samples_per_chunk};
  const auto latent = static_cast<Eigen::Index>(spec.latent_dim());
  const Eigen::MatrixXd pooled_grad =
      outer_in_grad.middleCols(static_cast<Eigen::Index>(spec.d), latent);

  const bool have_inner = cache.inner.size() == lay.chunks();
  nn::MlpCache scratch_cache;
  for (std::size_t c = 0; c < lay.chunks(); ++c) {
    const std::size_t s0 = c * lay.samples_per_chunk;
    const std::size_t s1 = std::min(lay.batch, s0 + lay.samples_per_chunk);
    const nn::MlpCache* inner_cache = &scratch_cache;
    if (have_inner) {
      inner_cache = &cache.inner[c];
    } else {
      nn::forward(spec.inner, w.inner, window_block(cache.input, s0, s1, lay, spec.d), &scratch_cache);
    }
    // Every window of a series receives that series' pooled gradient.
    Eigen::MatrixXd lat_grad(static_cast<Eigen::Index>((s1 - s0) * lay.n_windows), latent);
    for (std::size_t s = s0; s < s1; ++s) {
      lat_grad.middleRows(static_cast<Eigen::Index>((s - s0) * lay.n_windows),
                          static_cast<Eigen::Index>(lay.n_windows))
          .rowwise() = pooled_grad.row(static_cast<Eigen::Index>(s));
    }
    nn::backward(spec.inner, w.inner, *inner_cache, lat_grad, grad.inner, nullptr);
  }
}

Eigen::VectorXd pen_forward(const PenSpec& spec, const PenWeights& w, std::span<const double> y,
                            std::span<const double> extras, PenCache* cache, Pooling pooling) {
  if (extras.size() != spec.extra_dim) {
    throw std::invalid_argument("expected " + std::to_string(spec.extra_dim) + " extra features, got " +
                                std::to_string(extras.size()));
  }
  if (y.size() <= spec.d) {
    throw std::invalid_argument("PEN of order " + std::to_string(spec.d) + " needs M > d");
  }
  Eigen::MatrixXd x(1, static_cast<Eigen::Index>(y.size() + extras.size()));
  for (std::size_t i = 0; i < y.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = y[i];
  for (std::size_t i = 0; i < extras.size(); ++i) {
    x(0, static_cast<Eigen::Index>(y.size() + i)) = extras[i];
  }
  return forward_batch(spec, w, x, pooling, cache).row(0).transpose();
}

PenWeights pen_backward(const PenSpec& spec, const PenWeights& w, const PenCache& cache,
                        const Eigen::VectorXd& grad_out) {
  PenWeights grad = zero_weights(spec);
  backward_batch(spec, w, cache, Eigen::MatrixXd(grad_out.transpose()), grad);
  return grad;
}

// ------------------------------------------------------------ PenRegressor

PenRegressor::PenRegressor(PenSpec spec, PenWeights weights, std::size_t series_len, Pooling pooling)
    : spec_(std::move(spec)), weights_(std::move(weights)), series_len_(series_len), pooling_(pooling) {
  spec_.validate();
  if (weights_.num_params() != count_weights(spec_)) {
    throw std::invalid_argument("weights do not match PEN spec");
  }
  if (series_len_ <= spec_.d) throw std::invalid_argument("series length must exceed d");
}

PenRegressor::PenRegressor(PenSpec spec, std::size_t series_len, Rng& rng)
    : spec_(std::move(spec)), series_len_(series_len), pooling_(Pooling::Compensated) {
  weights_ = init_weights(spec_, rng);
  if (series_len_ <= spec_.d) throw std::invalid_argument("series length must exceed d");
}

void PenRegressor::set_parameters(std::span<const double> params) { assign_flat(weights_, params); }

Eigen::MatrixXd PenRegressor::predict(const Eigen::MatrixXd& x) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw std::invalid_argument("PEN regressor expects " + std::to_string(input_dim()) + " inputs");
  }
  return forward_batch(spec_, weights_, x, pooling_);
}

double PenRegressor::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                                       std::vector<double>& grad) const {
  if (static_cast<std::size_t>(x.cols()) != input_dim()) {
    throw std::invalid_argument("PEN regressor expects " + std::to_string(input_dim()) + " inputs");
  }
  PenCache cache;
  const Eigen::MatrixXd pred = forward_batch(spec_, weights_, x, pooling_, &cache);
  PenWeights g = zero_weights(spec_);
  backward_batch(spec_, weights_, cache, nn::mse_gradient(pred, target), g);
  grad = flatten(g);
  return nn::mse_loss(pred, target);
}

// ------------------------------------------------------- block switches

void validate(const BlockSwitchIndices& b, std::size_t m, std::size_t d) {
  if (!(b.i <= b.j && b.j < b.k && b.k <= b.l && b.l < m)) {
    throw std::invalid_argument("block-switch indices must satisfy i <= j < k <= l < M");
  }
  if (b.j - b.i < d || b.l - b.k < d) {
    throw std::invalid_argument("each block must span at least d + 1 values");
  }
}

bool block_switch_applies(std::span<const double> y, std::size_t d, const BlockSwitchIndices& b) {
  validate(b, y.size(), d);
  for (std::size_t t = 0; t < d; ++t) {
    if (y[b.i + t] != y[b.k + t]) return false;
    if (y[b.j - t] != y[b.l - t]) return false;
  }
  return true;
}

std::vector<double> block_switch(std::span<const double> y, std::size_t d, const BlockSwitchIndices& b) {
  std::vector<double> out(y.begin(), y.end());
  if (!block_switch_applies(y, d, b)) return out;
  auto pos = out.begin() + static_cast<std::ptrdiff_t>(b.i);
  pos = std::copy(y.begin() + static_cast<std::ptrdiff_t>(b.k), y.begin() + static_cast<std::ptrdiff_t>(b.l + 1), pos);
  pos = std::copy(y.begin() + static_cast<std::ptrdiff_t>(b.j + 1), y.begin() + static_cast<std::ptrdiff_t>(b.k), pos);
  std::copy(y.begin() + static_cast<std::ptrdiff_t>(b.i), y.begin() + static_cast<std::ptrdiff_t>(b.j + 1), pos);
  return out;
}

BlockSwitchIndices after_switch(const BlockSwitchIndices& b) {
  return {b.i, b.i + (b.l - b.k), b.l - (b.j - b.i), b.l};
}

double max_relative_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("outputs differ in length");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(std::abs(a[i]), std::abs(b[i]));
    if (scale == 0.0) continue;
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

InvarianceReport check_block_switch_invariance(const SeriesFunction& f, std::size_t m, std::size_t d,
                                               std::size_t trials, Rng& rng) {
  // Blocks of at least 2d+1 values keep planted prefixes and suffixes apart
  // and leave a free middle value, so the two blocks never coincide.
  const std::size_t min_len = 2 * d + 1;
  if (m < 2 * min_len) throw std::invalid_argument("series too short to plant two blocks");
  std::normal_distribution<double> normal(0.0, 1.0);
  InvarianceReport report;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::vector<double> y(m);
    for (auto& v : y) v = normal(rng);
    const std::size_t spare = m - 2 * min_len;
    std::uniform_int_distribution<std::size_t> extra(0, spare);
    const std::size_t len1 = min_len + extra(rng) / 2;
    const std::size_t len2 = min_len + std::uniform_int_distribution<std::size_t>(0, m - len1 - min_len)(rng) / 2;
    const std::size_t slack = m - len1 - len2;
    std::uniform_int_distribution<std::size_t> pick(0, slack);
    std::size_t a = pick(rng);
    std::size_t b = pick(rng);
    if (a > b) std::swap(a, b);
    BlockSwitchIndices idx{a, a + len1 - 1, b + len1, b + len1 + len2 - 1};
    for (std::size_t t = 0; t < d; ++t) {
      y[idx.k + t] = y[idx.i + t];
      y[idx.l - t] = y[idx.j - t];
    }
    const std::vector<double> switched = block_switch(y, d, idx);
    if (switched != y) ++report.applied;
    report.max_rel_discrepancy =
        std::max(report.max_rel_discrepancy, max_relative_difference(f(y), f(switched)));
    ++report.trials;
  }
  return report;
}

InvarianceReport check_permutation_invariance(const SeriesFunction& f, std::size_t m,
                                              std::size_t trials, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  InvarianceReport report;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    std::vector<double> y(m);
    for (auto& v : y) v = normal(rng);
    std::vector<double> shuffled = y;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (shuffled != y) ++report.applied;
    report.max_rel_discrepancy =
        std::max(report.max_rel_discrepancy, max_relative_difference(f(y), f(shuffled)));
    ++report.trials;
  }
  return report;
}

}  // namespace penabc::pen
