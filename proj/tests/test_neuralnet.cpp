// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "penabc/neuralnet.hpp"
#include "penabc/presets.hpp"

using namespace penabc;
using namespace penabc::nn;

namespace {

MlpSpec two_layer() { return parse_layers("3x5:relu, 5x2:linear"); }

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng) {
  std::normal_distribution<double> z;
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = z(rng);
  return m;
}

// Constant-gradient toy regressor: one parameter p, prediction p, gradient -1.
class Drift final : public Regressor {
 public:
  std::size_t num_params() const override { return 1; }
  std::vector<double> parameters() const override { return {p_}; }
  void set_parameters(std::span<const double> params) override { p_ = params[0]; }
  std::size_t input_dim() const override { return 1; }
  std::size_t output_dim() const override { return 1; }
  Eigen::MatrixXd predict(const Eigen::MatrixXd& x) const override {
    return Eigen::MatrixXd::Constant(x.rows(), 1, p_);
  }
  double loss_and_gradient(const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                           std::vector<double>& grad) const override {
    grad.assign(1, -1.0);
    return 1.0;
  }

 private:
  double p_ = 0.0;
};

RegressionData constant_data(std::size_t n, double target) {
  RegressionData d;
  d.inputs = RowMatrix::Zero(static_cast<Eigen::Index>(n), 1);
  d.targets = RowMatrix::Constant(static_cast<Eigen::Index>(n), 1, target);
  return d;
}

}  // namespace

TEST_SUITE("neuralnet") {

TEST_CASE("initialisation") {
  const MlpSpec spec = parse_layers("10x7:relu, 7x3:linear");
  Rng a(1), b(1);
  const MlpWeights w = init_weights(spec, a);
  for (std::size_t l = 0; l < spec.layers.size(); ++l) {
    const double bound = std::sqrt(6.0 / static_cast<double>(spec.layers[l].in_dim + spec.layers[l].out_dim));
    CHECK(w.layers[l].weight.cwiseAbs().maxCoeff() <= bound);
    CHECK(w.layers[l].weight.rows() == static_cast<Eigen::Index>(spec.layers[l].out_dim));
    CHECK(w.layers[l].weight.cols() == static_cast<Eigen::Index>(spec.layers[l].in_dim));
  }
  CHECK(flatten(init_weights(spec, b)) == flatten(w));
  CHECK(count_weights(parse_layers("1x100:relu")) == 200);
  CHECK(w.num_params() == count_weights(spec));
}

TEST_CASE("spec validation") {
  MlpSpec bad;
  bad.layers = {{3, 4, Activation::Relu}, {5, 1, Activation::Linear}};
  CHECK_THROWS(bad.validate());
  CHECK_THROWS(parse_layers("3x4:relu, 5x1:linear"));
  CHECK_THROWS(parse_layers("3x0:relu"));
  const MlpSpec good = two_layer();
  CHECK(parse_layers(format_layers(good)) == good);
}

TEST_CASE("forward pass") {
  const MlpSpec spec = two_layer();
  SUBCASE("zero weights give zero output") {
    const Eigen::VectorXd out = forward(spec, zero_weights(spec), Eigen::VectorXd(Eigen::VectorXd::Constant(3, 2.5)));
    CHECK(out.isZero(0.0));
  }
  SUBCASE("identity linear layer") {
    const MlpSpec id = parse_layers("4x4:linear");
    MlpWeights w = zero_weights(id);
    w.layers[0].weight = Eigen::MatrixXd::Identity(4, 4);
    const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(4, -1.0, 2.0);
    CHECK(forward(id, w, x) == x);
  }
  SUBCASE("agrees with hand-rolled arithmetic") {
    Rng rng(3);
    const MlpWeights w = init_weights(spec, rng);
    for (int t = 0; t < 20; ++t) {
      const Eigen::MatrixXd x = random_matrix(1, 3, rng);
      const Eigen::VectorXd got = forward(spec, w, Eigen::VectorXd(x.row(0).transpose()));
      const auto want = oracle::mlp(spec, w, {x(0, 0), x(0, 1), x(0, 2)});
      for (std::size_t o = 0; o < 2; ++o) CHECK(std::abs(got(static_cast<Eigen::Index>(o)) - want[o]) < 1e-12);
    }
  }
}

TEST_CASE("loss and gradients") {
  const MlpSpec spec = two_layer();
  Rng rng(5);
  const MlpRegressor net(spec, rng);
  const Eigen::MatrixXd x = random_matrix(8, 3, rng);
  SUBCASE("perfect predictions") {
    const Eigen::MatrixXd target = net.predict(x);
    std::vector<double> grad;
    CHECK(net.loss_and_gradient(x, target, grad) == 0.0);
    for (double g : grad) CHECK(g == 0.0);
    CHECK(mse_loss(target, target) == 0.0);
  }
  SUBCASE("loss is non-negative") {
    for (int t = 0; t < 10; ++t) CHECK(mse_loss(random_matrix(4, 2, rng), random_matrix(4, 2, rng)) > 0.0);
  }
  SUBCASE("zero upstream gradient") {
    MlpCache cache;
    const MlpWeights w = init_weights(spec, rng);
    forward(spec, w, x, &cache);
    MlpWeights g = zero_weights(spec);
    backward(spec, w, cache, Eigen::MatrixXd::Zero(8, 2), g);
    for (double v : flatten(g)) CHECK(v == 0.0);
  }
  SUBCASE("gradients match central differences") {
    const Eigen::MatrixXd target = random_matrix(8, 2, rng);
    MlpRegressor probe(spec, rng);
    std::vector<double> grad;
    probe.loss_and_gradient(x, target, grad);
    std::vector<double> p = probe.parameters();
    std::vector<double> scratch;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double h = 1e-6;
      const double keep = p[i];
      p[i] = keep + h;
      probe.set_parameters(p);
      const double up = probe.loss_and_gradient(x, target, scratch);
      p[i] = keep - h;
      probe.set_parameters(p);
      const double down = probe.loss_and_gradient(x, target, scratch);
      p[i] = keep;
      const double fd = (up - down) / (2.0 * h);
      CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(std::abs(fd), std::abs(grad[i])) + 1e-6);
    }
  }
}

TEST_CASE("Adam") {
  AdamConfig cfg;
  SUBCASE("zero gradient leaves parameters alone") {
    std::vector<double> p{1.0, -2.0};
    AdamState s(2);
    adam_step(p, std::vector<double>{0.0, 0.0}, s, cfg);
    CHECK(p == std::vector<double>{1.0, -2.0});
  }
  SUBCASE("first step moves by lr against the gradient sign") {
    std::vector<double> p{0.0, 0.0, 0.0};
    AdamState s(3);
    adam_step(p, std::vector<double>{3.0, -0.01, 1e4}, s, cfg);
    CHECK(p[0] == doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
    CHECK(p[1] == doctest::Approx(cfg.learning_rate).epsilon(1e-5));
    CHECK(p[2] == doctest::Approx(-cfg.learning_rate).epsilon(1e-6));
    CHECK(std::abs(p[0]) < cfg.learning_rate);
  }
  SUBCASE("minimises a convex quadratic") {
    std::vector<double> w{1.0, 1.0, 1.0};
    AdamState s(3);
    const AdamConfig fast{.learning_rate = 0.05};
    for (int step = 0; step < 200; ++step) {
      std::vector<double> g(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) g[i] = 2.0 * w[i];
      adam_step(w, g, s, fast);
    }
    double norm = 0.0;
    for (double v : w) norm += v * v;
    CHECK(std::sqrt(norm) < 0.1);
  }
}

TEST_CASE("early stopping keeps the best epoch") {
  const double lr = 0.01;
  SUBCASE("minimum at epoch 3 of 10") {
    Drift net;
    const TrainConfig cfg{.epochs = 10, .batch_size = 4, .learning_rate = lr, .seed = 1};
    const TrainResult r = train(net, constant_data(4, 0.0), constant_data(4, 3.0 * lr), cfg);
    CHECK(r.best_epoch == 3);
    CHECK(r.history.size() == 10);
    CHECK(net.parameters()[0] == r.best_params[0]);
    CHECK(r.best_eval_mse <= r.history.front().eval_mse);
  }
  SUBCASE("strictly decreasing error returns the last epoch") {
    Drift net;
    const TrainConfig cfg{.epochs = 10, .batch_size = 4, .learning_rate = lr, .seed = 1};
    const TrainResult r = train(net, constant_data(4, 0.0), constant_data(4, 1.0), cfg);
    CHECK(r.best_epoch == 10);
  }
}

TEST_CASE("learns an exactly representable map") {
  Rng rng(7);
  std::normal_distribution<double> z;
  auto make = [&](std::size_t n) {
    RegressionData d;
    d.inputs.resize(static_cast<Eigen::Index>(n), 1);
    d.targets.resize(static_cast<Eigen::Index>(n), 1);
    for (Eigen::Index i = 0; i < d.inputs.rows(); ++i) {
      d.inputs(i, 0) = z(rng);
      d.targets(i, 0) = 2.0 * d.inputs(i, 0);
    }
    return d;
  };
  const RegressionData tr = make(1000);
  const RegressionData ev = make(200);
  MlpRegressor net(parse_layers("1x1:linear"), rng);
  const TrainResult r = train(net, tr, ev, TrainConfig{.epochs = 100, .batch_size = 50, .learning_rate = 1e-2, .seed = 3});
  CHECK(r.best_eval_mse < 1e-3);
  CHECK(evaluation_mse(net, ev) == r.best_eval_mse);
}

TEST_CASE("training is reproducible") {
  Rng data_rng(9);
  RegressionData d;
  d.inputs = random_matrix(64, 3, data_rng);
  d.targets = random_matrix(64, 2, data_rng);
  auto run = [&] {
    Rng rng(11);
    MlpRegressor net(two_layer(), rng);
    train(net, d, d, TrainConfig{.epochs = 5, .batch_size = 16, .learning_rate = 1e-3, .seed = 4});
    return net.parameters();
  };
  CHECK(run() == run());
}

TEST_CASE("published MLP weight counts") {
  using models::ModelId;
  using presets::NetSize;
  CHECK(count_weights(presets::mlp_spec(ModelId::Ar2, NetSize::Small)) == 10087);
  CHECK(count_weights(presets::mlp_spec(ModelId::Ar2, NetSize::Large)) == 25352);
  CHECK(count_weights(presets::mlp_spec(ModelId::GAndK, NetSize::Small)) == 26039);
  CHECK(count_weights(presets::mlp_spec(ModelId::GAndK, NetSize::Large)) == 115454);
  CHECK(count_weights(presets::mlp_spec(ModelId::GAndK, NetSize::Pre)) == 25454);
  CHECK(count_weights(presets::mlp_spec(ModelId::AlphaStable, NetSize::Small)) == 26089);
  CHECK(count_weights(presets::mlp_spec(ModelId::AlphaStable, NetSize::Large)) == 115654);
  CHECK(count_weights(presets::mlp_spec(ModelId::AlphaStable, NetSize::Pre)) == 25454);
  CHECK(count_weights(presets::mlp_spec(ModelId::Ma2, NetSize::Small)) == 11297);
  CHECK(count_weights(presets::mlp_spec(ModelId::Ma2, NetSize::Large)) == 25352);
  for (const auto& name : presets::names()) {
    const NetworkSpec spec = presets::by_name(name);
    CHECK(count_weights(parse_network_spec(format_network_spec(spec))) == count_weights(spec));
  }
}

}  // TEST_SUITE
