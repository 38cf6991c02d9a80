// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_NEURALNET_HPP
#define PENABC_NEURALNET_HPP

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penabc/common.hpp"

/// Dense feed-forward networks in double precision. Every routine works on
/// mini-batches laid out one example per row.
namespace penabc::nn {

enum class Activation : std::uint32_t { Relu = 0, Linear = 1 };

std::string_view activation_name(Activation a) noexcept;
Activation parse_activation(std::string_view name);

struct LayerSpec {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Activation activation = Activation::Relu;

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct MlpSpec {
  std::vector<LayerSpec> layers;

  std::size_t input_dim() const { return layers.front().in_dim; }
  std::size_t output_dim() const { return layers.back().out_dim; }
  /// Throws std::invalid_argument unless non-empty, all dims positive and chained.
  void validate() const;

  friend bool operator==(const MlpSpec&, const MlpSpec&) = default;
};

/// "1000x25:relu, 25x25:relu, 25x12:relu, 12x4:linear"
std::string format_layers(const MlpSpec& spec);
MlpSpec parse_layers(std::string_view text);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
};

struct MlpWeights {
  std::vector<DenseLayer> layers;

  std::size_t num_params() const;
};

/// Trainable scalars (weights + biases).
std::size_t count_weights(const MlpSpec& spec);

/// Glorot-uniform weights, zero biases.
MlpWeights init_weights(const MlpSpec& spec, Rng& rng);
MlpWeights zero_weights(const MlpSpec& spec);

/// Layer-by-layer storage order: each weight matrix (column-major), then its bias.
std::vector<double> flatten(const MlpWeights& w);
void append_flat(const MlpWeights& w, std::vector<double>& out);
/// Reads num_params() values starting at `offset`; returns the new offset.
std::size_t assign_flat(MlpWeights& w, std::span<const double> flat, std::size_t offset = 0);

/// Pre-activations and activations per layer; `post[0]` is the input batch.
struct MlpCache {
  std::vector<Eigen::MatrixXd> pre;
  std::vector<Eigen::MatrixXd> post;
};

/// Batch forward pass: x is (batch x in_dim). Fills `cache` when non-null.
Eigen::MatrixXd forward(const MlpSpec& spec, const MlpWeights& w, const Eigen::MatrixXd& x,
                        MlpCache* cache = nullptr);
Eigen::VectorXd forward(const MlpSpec& spec, const MlpWeights& w, const Eigen::VectorXd& x);

/// Accumulates parameter gradients for `grad_out` = dLoss/dOutput (batch x out_dim)
/// into `param_grad`. Writes dLoss/dInput into `input_grad` when non-null.
void backward(const MlpSpec& spec, const MlpWeights& w, const MlpCache& cache,
              const Eigen::MatrixXd& grad_out, MlpWeights& param_grad,
              Eigen::MatrixXd* input_grad = nullptr);

/// (1/N) sum_i ||pred_i - target_i||^2 over the N rows.
double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);
/// d mse_loss / d pred.
Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

// ------------------------------------------------------------------ Adam

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> first_moment;
  std::vector<double> second_moment;
  std::uint64_t step = 0;

  explicit AdamState(std::size_t n) : first_moment(n, 0.0), second_moment(n, 0.0) {}
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg);

// -------------------------------------------------------------- training

/// Anything trainable by regression on (input row, target row) pairs.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::size_t num_params() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  virtual std::size_t input_dim() const = 0;
  virtual std::size_t output_dim() const = 0;

  virtual Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const = 0;
  /// Mean squared error over the batch; `grad` is resized to num_params().
  virtual double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                                   std::vector<double>& grad) const = 0;
};

/// Plain MLP regressor.
class MlpRegressor final : public Regressor {
 public:
  MlpRegressor(MlpSpec spec, MlpWeights weights);
  MlpRegressor(MlpSpec spec, Rng& rng);

  const MlpSpec& spec() const noexcept { return spec_; }
  const MlpWeights& weights() const noexcept { return weights_; }

  std::size_t num_params() const override { return weights_.num_params(); }
  std::vector<double> parameters() const override { return flatten(weights_); }
  void set_parameters(std::span<const double> params) override;
  std::size_t input_dim() const override { return spec_.input_dim(); }
  std::size_t output_dim() const override { return spec_.output_dim(); }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const override;
  double loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                           std::vector<double>& grad) const override;

 private:
  MlpSpec spec_;
  MlpWeights weights_;
};

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 200;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
};

struct RegressionData {
  RowMatrix inputs;
  RowMatrix targets;

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_mse = 0.0;
  double eval_mse = 0.0;
};

struct TrainResult {
  std::vector<double> best_params;
  std::size_t best_epoch = 0;
  double best_eval_mse = 0.0;
  std::vector<EpochRecord> history;
};

/// Mean squared error of `net` over `data`, evaluated in chunks.
double evaluation_mse(const Regressor& net, const RegressionData& data);

/// Adam on shuffled mini-batches for cfg.epochs epochs. After each epoch the
/// evaluation MSE is computed; the snapshot with the lowest value is returned
/// and also installed into `net`. Throws std::runtime_error on a non-finite loss.
TrainResult train(Regressor& net, const RegressionData& train_data, const RegressionData& eval_data,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace penabc::nn

#endif  // PENABC_NEURALNET_HPP
