// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_PEN_HPP
#define PENABC_PEN_HPP

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "penabc/common.hpp"
#include "penabc/neuralnet.hpp"

/// Partially exchangeable networks of order d:
///
///   F(y) = outer( y_{1:d}, sum_{i=1}^{M-d} inner(y_{i:i+d}), extras )
///
/// The inner network sees every length-(d+1) sliding window, the pooled sum
/// is concatenated with the first d values (and optional side features) and
/// mapped to the output by the outer network. d = 0 is a DeepSets network.
namespace penabc::pen {

struct PenSpec {
  std::size_t d = 0;
  nn::MlpSpec inner;
  nn::MlpSpec outer;
  std::size_t extra_dim = 0;

  std::size_t latent_dim() const { return inner.output_dim(); }
  /// inner input = d + 1, outer input = d + latent + extra, outer ends linear.
  void validate() const;

  friend bool operator==(const PenSpec&, const PenSpec&) = default;
};

struct PenWeights {
  nn::MlpWeights inner;
  nn::MlpWeights outer;

  std::size_t num_params() const { return inner.num_params() + outer.num_params(); }
};

std::size_t count_weights(const PenSpec& spec);
PenWeights init_weights(const PenSpec& spec, Rng& rng);
PenWeights zero_weights(const PenSpec& spec);
/// Inner parameters first, then outer.
std::vector<double> flatten(const PenWeights& w);
void assign_flat(PenWeights& w, std::span<const double> flat);

/// The M-d overlapping windows (y_i, ..., y_{i+d}), one per row.
RowMatrix windows(std::span<const double> y, std::size_t d);

enum class Pooling {
  Compensated,  // Neumaier summation in window order
  Canonical,    // each latent coordinate sorted before summation; exact under reordering
};

/// Everything a backward pass needs. Inner caches may be dropped for large
/// batches, in which case the inner forward pass is recomputed.
struct PenCache {
  std::size_t series_len = 0;
  std::size_t batch = 0;
  std::size_t samples_per_chunk = 0;
  Eigen::MatrixXd input;  // batch x (M + extra)
  std::vector<nn::MlpCache> inner;
  nn::MlpCache outer;
};

/// Batched forward pass. Each row of `x` is a series of length M followed by
/// extra_dim side features. Returns (batch x outer output).
Eigen::MatrixXd forward_batch(const PenSpec& spec, const PenWeights& w, const Eigen::MatrixXd& x,
                              Pooling pooling = Pooling::Compensated, PenCache* cache = nullptr);

/// Accumulates parameter gradients for dLoss/dOutput into `grad`.
void backward_batch(const PenSpec& spec, const PenWeights& w, const PenCache& cache,
                    const Eigen::MatrixXd& grad_out, PenWeights& grad);

/// Single-series convenience wrappers.
Eigen::VectorXd pen_forward(const PenSpec& spec, const PenWeights& w, std::span<const double> y,
                            std::span<const double> extras = {}, PenCache* cache = nullptr,
                            Pooling pooling = Pooling::Compensated);
PenWeights pen_backward(const PenSpec& spec, const PenWeights& w, const PenCache& cache,
                        const Eigen::VectorXd& grad_out);

class PenRegressor final : public nn::Regressor {
 public:
  PenRegressor(PenSpec spec, PenWeights weights, std::size_t series_len,
               Pooling pooling = Pooling::Compensated);
  PenRegressor(PenSpec spec, std::size_t series_len, Rng& rng);

  const PenSpec& spec() const noexcept { return spec_; }
  const PenWeights& weights() const noexcept { return weights_; }

  std::size_t num_params() const override { return weights_.num_params(); }
  std::vector<double> parameters() const override { return flatten(weights_); }
  void set_parameters(std::span<const double> params) override;
  std::size_t input_dim() const override { return series_len_ + spec_.extra_dim; }
  std::size_t output_dim() const override { return spec_.outer.output_dim(); }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const override;
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                           std::vector<double>& grad) const override;

 private:
  PenSpec spec_;
  PenWeights weights_;
  std::size_t series_len_;
  Pooling pooling_;
};

// ------------------------------------------------------- block switches

/// Zero-based inclusive blocks [i, j] and [k, l] with i <= j < k <= l.
struct BlockSwitchIndices {
  std::size_t i = 0, j = 0, k = 0, l = 0;

  friend bool operator==(const BlockSwitchIndices&, const BlockSwitchIndices&) = default;
};

/// Throws unless the indices describe two disjoint blocks of a length-M
/// series, each spanning at least d + 1 values.
void validate(const BlockSwitchIndices& b, std::size_t m, std::size_t d);

/// True when both blocks start with the same d values and end with the same d values.
bool block_switch_applies(std::span<const double> y, std::size_t d, const BlockSwitchIndices& b);

/// Interchanges the two blocks when block_switch_applies(), otherwise returns y.
std::vector<double> block_switch(std::span<const double> y, std::size_t d,
                                 const BlockSwitchIndices& b);

/// Where the blocks sit after a switch; applying the switch with these
/// indices undoes it.
BlockSwitchIndices after_switch(const BlockSwitchIndices& b);

using SeriesFunction = std::function<std::vector<double>(std::span<const double>)>;

struct InvarianceReport {
  std::size_t trials = 0;
  std::size_t applied = 0;  // transformations that actually changed the series
  double max_rel_discrepancy = 0.0;
};

/// Largest componentwise |a-b| / max(|a|,|b|) (0 when both are 0).
double max_relative_difference(std::span<const double> a, std::span<const double> b);

/// Draws random length-M series with a planted applicable d-block-switch
/// (matching d-prefixes and d-suffixes), applies it and compares f.
InvarianceReport check_block_switch_invariance(const SeriesFunction& f, std::size_t m, std::size_t d,
                                               std::size_t trials, Rng& rng);

/// Compares f on random series and random permutations of them.
InvarianceReport check_permutation_invariance(const SeriesFunction& f, std::size_t m,
                                              std::size_t trials, Rng& rng);

}  // namespace penabc::pen

#endif  // PENABC_PEN_HPP
