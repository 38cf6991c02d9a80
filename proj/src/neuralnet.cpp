// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/neuralnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace penabc::nn {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t parse_count(std::string_view s) {
  s = trim(s);
  if (s.empty()) throw std::invalid_argument("empty layer dimension");
  std::size_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("bad layer dimension '" + std::string(s) + "'");
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  if (a == Activation::Relu) z = z.cwiseMax(0.0);
}

}  // namespace

std::string_view activation_name(Activation a) noexcept {
  return a == Activation::Relu ? "relu" : "linear";
}

Activation parse_activation(std::string_view name) {
  name = trim(name);
  if (name == "relu") return Activation::Relu;
  if (name == "linear") return Activation::Linear;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

void MlpSpec::validate() const {
  if (layers.empty()) throw std::invalid_argument("network has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].in_dim == 0 || layers[i].out_dim == 0) {
      throw std::invalid_argument("layer " + std::to_string(i) + " has a zero dimension");
    }
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim) {
      throw std::invalid_argument("layer " + std::to_string(i) + " input " +
                                  std::to_string(layers[i].in_dim) + " does not chain to output " +
                                  std::to_string(layers[i - 1].out_dim));
    }
  }
}

std::string format_layers(const MlpSpec& spec) {
  std::string out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (i > 0) out += ", ";
    const auto& l = spec.layers[i];
    out += std::to_string(l.in_dim) + "x" + std::to_string(l.out_dim) + ":" +
           std::string(activation_name(l.activation));
  }
  return out;
}

MlpSpec parse_layers(std::string_view text) {
  MlpSpec spec;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const std::string_view item = trim(text.substr(pos, comma - pos));
    pos = comma + 1;
    if (item.empty()) continue;
    const auto x = item.find('x');
    const auto colon = item.find(':');
    if (x == std::string_view::npos || colon == std::string_view::npos || colon < x) {
      throw std::invalid_argument("layer '" + std::string(item) + "' is not of the form INxOUT:act");
    }
    spec.layers.push_back({parse_count(item.substr(0, x)), parse_count(item.substr(x + 1, colon - x - 1)),
                           parse_activation(item.substr(colon + 1))});
  }
  spec.validate();
  return spec;
}

std::size_t MlpWeights::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

std::size_t count_weights(const MlpSpec& spec) {
  spec.validate();
  std::size_t n = 0;
  for (const auto& l : spec.layers) n += l.in_dim * l.out_dim + l.out_dim;
  return n;
}

MlpWeights zero_weights(const MlpSpec& spec) {
  spec.validate();
  MlpWeights w;
  for (const auto& l : spec.layers) {
    w.layers.push_back({Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l.out_dim),
                                              static_cast<Eigen::Index>(l.in_dim)),
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l.out_dim))});
  }
  return w;
}

MlpWeights init_weights(const MlpSpec& spec, Rng& rng) {
  MlpWeights w = zero_weights(spec);
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in_dim + l.out_dim));
    std::uniform_real_distribution<double> dist(-limit, limit);
    auto& m = w.layers[i].weight;
    // Row-major fill so the draw order does not depend on Eigen's storage order.
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = dist(rng);
    }
  }
  return w;
}

void append_flat(const MlpWeights& w, std::vector<double>& out) {
  for (const auto& l : w.layers) {
    out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
    out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
  }
}

std::vector<double> flatten(const MlpWeights& w) {
  std::vector<double> out;
  out.reserve(w.num_params());
  append_flat(w, out);
  return out;
}

std::size_t assign_flat(MlpWeights& w, std::span<const double> flat, std::size_t offset) {
  if (offset + w.num_params() > flat.size()) {
    throw std::invalid_argument("flat parameter vector too short");
  }
  for (auto& l : w.layers) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), l.weight.size(), l.weight.data());
    offset += static_cast<std::size_t>(l.weight.size());
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), l.bias.size(), l.bias.data());
    offset += static_cast<std::size_t>(l.bias.size());
  }
  return offset;
}

Eigen::MatrixXd forward(const MlpSpec& spec, const MlpWeights& w, const Eigen::MatrixXd& x,
                        MlpCache* cache) {
  if (w.layers.size() != spec.layers.size()) throw std::invalid_argument("weights do not match spec");
  if (static_cast<std::size_t>(x.cols()) != spec.input_dim()) {
    throw std::invalid_argument("input has " + std::to_string(x.cols()) + " columns, network expects " +
                                std::to_string(spec.input_dim()));
  }
  if (cache) {
    cache->pre.resize(spec.layers.size());
    cache->post.resize(spec.layers.size() + 1);
    cache->post[0] = x;
  }
  Eigen::MatrixXd a = x;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = w.layers[i];
    Eigen::MatrixXd z(a.rows(), layer.weight.rows());
    z.noalias() = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (cache) cache->pre[i] = z;
    apply_activation(spec.layers[i].activation, z);
    if (cache) cache->post[i + 1] = z;
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd forward(const MlpSpec& spec, const MlpWeights& w, const Eigen::VectorXd& x) {
  const Eigen::MatrixXd out = forward(spec, w, Eigen::MatrixXd(x.transpose()));
  return out.row(0).transpose();
}

void backward(const MlpSpec& spec, const MlpWeights& w, const MlpCache& cache,
              const Eigen::MatrixXd& grad_out, MlpWeights& param_grad, Eigen::MatrixXd* input_grad) {
  const std::size_t n = spec.layers.size();
  if (cache.pre.size() != n || cache.post.size() != n + 1 || param_grad.layers.size() != n) {
    throw std::invalid_argument("backward: cache or gradient does not match spec");
  }
  if (grad_out.rows() != cache.post[n].rows() || grad_out.cols() != cache.post[n].cols()) {
    throw std::invalid_argument("backward: output gradient has the wrong shape");
  }
  Eigen::MatrixXd delta = grad_out;
  for (std::size_t idx = n; idx-- > 0;) {
    if (spec.layers[idx].activation == Activation::Relu) {
      delta = (cache.pre[idx].array() > 0.0).select(delta, 0.0);
    }
    param_grad.layers[idx].weight.noalias() += delta.transpose() * cache.post[idx];
    param_grad.layers[idx].bias.noalias() += delta.colwise().sum().transpose();
    if (idx > 0 || input_grad) {
      Eigen::MatrixXd prev(delta.rows(), w.layers[idx].weight.cols());
      prev.noalias() = delta * w.layers[idx].weight;
      delta = std::move(prev);
    }
  }
  if (input_grad) *input_grad = std::move(delta);
}

double mse_loss(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  if (pred.rows() == 0) throw std::invalid_argument("mse_loss: empty batch");
  return (pred - target).squaredNorm() / static_cast<double>(pred.rows());
}

Eigen::MatrixXd mse_gradient(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
    throw std::invalid_argument("mse_gradient: shape mismatch");
  }
  return (2.0 / static_cast<double>(pred.rows())) * (pred - target);
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state,
               const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: size mismatch");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    double& m = state.first_moment[i];
    double& v = state.second_moment[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

// ------------------------------------------------------------ MlpRegressor

MlpRegressor::MlpRegressor(MlpSpec spec, MlpWeights weights)
    : spec_(std::move(spec)), weights_(std::move(weights)) {
  spec_.validate();
  if (weights_.num_params() != count_weights(spec_)) {
    throw std::invalid_argument("weights do not match network spec");
  }
}

MlpRegressor::MlpRegressor(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  weights_ = init_weights(spec_, rng);
}

void MlpRegressor::set_parameters(std::span<const double> params) {
  if (params.size() != num_params()) throw std::invalid_argument("parameter count mismatch");
  assign_flat(weights_, params);
}

Eigen::MatrixXd MlpRegressor::predict(const Eigen::MatrixXd& x) const {
  return forward(spec_, weights_, x);
}

double MlpRegressor::loss_and_gradient(const Eigen::MatrixXd& x, const Eigen::MatrixXd& target,
                                       std::vector<double>& grad) const {
  MlpCache cache;
  const Eigen::MatrixXd pred = forward(spec_, weights_, x, &cache);
  MlpWeights g = zero_weights(spec_);
  backward(spec_, weights_, cache, mse_gradient(pred, target), g);
  grad.clear();
  append_flat(g, grad);
  return mse_loss(pred, target);
}

// -------------------------------------------------------------- training

namespace {

Eigen::MatrixXd gather_rows(const RowMatrix& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace

double evaluation_mse(const Regressor& net, const RegressionData& data) {
  if (data.size() == 0) throw std::invalid_argument("evaluation set is empty");
  constexpr Eigen::Index kChunk = 256;
  double total = 0.0;
  for (Eigen::Index start = 0; start < data.inputs.rows(); start += kChunk) {
    const Eigen::Index len = std::min(kChunk, data.inputs.rows() - start);
    const Eigen::MatrixXd x = data.inputs.middleRows(start, len);
    const Eigen::MatrixXd t = data.targets.middleRows(start, len);
    total += (net.predict(x) - t).squaredNorm();
  }
  return total / static_cast<double>(data.size());
}

TrainResult train(Regressor& net, const RegressionData& train_data, const RegressionData& eval_data,
                  const TrainConfig& cfg, const std::function<void(const EpochRecord&)>& on_epoch) {
  if (train_data.size() == 0 || eval_data.size() == 0) {
    throw std::invalid_argument("training and evaluation sets must be non-empty");
  }
  if (cfg.epochs == 0 || cfg.batch_size == 0 || !(cfg.learning_rate > 0.0)) {
    throw std::invalid_argument("epochs, batch size and learning rate must be positive");
  }
  if (train_data.targets.rows() != train_data.inputs.rows() ||
      eval_data.targets.rows() != eval_data.inputs.rows()) {
    throw std::invalid_argument("inputs and targets differ in length");
  }

  Rng rng(derive_seed(cfg.seed, 0x7472616eULL));
  std::vector<std::size_t> order(train_data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<double> params = net.parameters();
  std::vector<double> grad;
  AdamState state(params.size());
  const AdamConfig adam{.learning_rate = cfg.learning_rate};

  TrainResult result;
  result.best_eval_mse = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double weighted_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> rows(order.data() + start, len);
      const double loss = net.loss_and_gradient(gather_rows(train_data.inputs, rows),
                                                gather_rows(train_data.targets, rows), grad);
      if (!std::isfinite(loss)) {
        throw std::runtime_error("non-finite training loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at " + std::to_string(start));
      }
      weighted_loss += loss * static_cast<double>(len);
      adam_step(params, grad, state, adam);
      net.set_parameters(params);
    }
    EpochRecord rec{epoch, weighted_loss / static_cast<double>(order.size()),
                    evaluation_mse(net, eval_data)};
    if (!std::isfinite(rec.eval_mse)) {
      throw std::runtime_error("non-finite evaluation loss at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (rec.eval_mse < result.best_eval_mse) {
      result.best_eval_mse = rec.eval_mse;
      result.best_epoch = epoch;
      result.best_params = params;
    }
    if (on_epoch) on_epoch(rec);
  }
  net.set_parameters(result.best_params);
  return result;
}

}  // namespace penabc::nn
