// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/summary.hpp"

#include <algorithm>
#include <charconv>
#include <stdexcept>

#include "penabc/dataset_io.hpp"
#include "penabc/pen.hpp"

namespace penabc::summary {

using models::ModelId;

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::Handpicked: return "handpicked";
    case Method::MlpSmall: return "mlp-small";
    case Method::MlpLarge: return "mlp-large";
    case Method::MlpPre: return "mlp-pre";
    case Method::Pen: return "pen";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  for (Method m : {Method::Handpicked, Method::MlpSmall, Method::MlpLarge, Method::MlpPre, Method::Pen}) {
    if (method_name(m) == name) return m;
  }
  throw ConfigError("unknown summary method '" + std::string(name) + "'");
}

std::string MethodSpec::label() const {
  if (method == Method::Pen) return "pen-" + std::to_string(pen_d);
  return std::string(method_name(method));
}

std::size_t default_pen_order(ModelId model) noexcept {
  switch (model) {
    case ModelId::Ar2: return 2;
    case ModelId::Ma2: return 10;
    default: return 0;
  }
}

MethodSpec parse_method_spec(std::string_view label, ModelId model) {
  MethodSpec spec;
  if (label == "pen") {
    spec.method = Method::Pen;
    spec.pen_d = default_pen_order(model);
    return spec;
  }
  if (label.starts_with("pen-")) {
    const std::string_view digits = label.substr(4);
    std::size_t d = 0;
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec != std::errc() || ptr != digits.data() + digits.size() || digits.empty()) {
      throw ConfigError("bad PEN order in '" + std::string(label) + "'");
    }
    spec.method = Method::Pen;
    spec.pen_d = d;
    return spec;
  }
  spec.method = parse_method(label);
  return spec;
}

void validate(ModelId model, const MethodSpec& method) {
  if (method.method == Method::MlpPre && !models::is_static(model)) {
    throw ConfigError("mlp-pre is only defined for the i.i.d. models");
  }
  if (method.method == Method::Pen && models::is_static(model) && method.pen_d != 0) {
    throw ConfigError("the i.i.d. models use pen-0");
  }
}

namespace {

bool is_alpha(ModelId model) { return model == ModelId::AlphaStable; }

}  // namespace

std::size_t network_input_dim(ModelId model, Method method, std::size_t series_len) {
  switch (method) {
    case Method::Handpicked: throw std::invalid_argument("handpicked statistics have no network");
    case Method::MlpPre: return models::PreprocessSpec::for_model(model).ecdf_grid.size();
    default: return series_len + (is_alpha(model) ? 2 : 0);
  }
}

NetworkSpec network_for(ModelId model, const MethodSpec& method, std::size_t series_len) {
  validate(model, method);
  switch (method.method) {
    case Method::Handpicked: throw std::invalid_argument("handpicked statistics have no network");
    case Method::Pen: {
      pen::PenSpec spec = presets::pen_spec(model, method.pen_d);
      if (series_len <= spec.d) throw ConfigError("series too short for the PEN order");
      return spec;
    }
    case Method::MlpPre: return presets::mlp_spec(model, presets::NetSize::Pre);
    case Method::MlpSmall:
    case Method::MlpLarge: {
      nn::MlpSpec spec = presets::mlp_spec(
          model, method.method == Method::MlpSmall ? presets::NetSize::Small : presets::NetSize::Large);
      spec.layers.front().in_dim = network_input_dim(model, method.method, series_len);
      return spec;
    }
  }
  throw std::logic_error("unreachable");
}

std::vector<double> network_input(ModelId model, Method method, std::span<const double> y,
                                  models::RobustScaleSign sign) {
  const models::PreprocessSpec prep = models::PreprocessSpec::for_model(model);
  if (method == Method::Handpicked) throw std::invalid_argument("handpicked statistics have no network");
  if (method == Method::MlpPre) return models::ecdf_features(y, prep.ecdf_grid);
  if (!prep.apply_robust_scale) return {y.begin(), y.end()};
  models::RobustScaled rs = models::robust_scale(y, sign);
  rs.scaled.push_back(rs.q1);
  rs.scaled.push_back(rs.q3);
  return std::move(rs.scaled);
}

RowMatrix network_inputs(ModelId model, Method method, const RowMatrix& series,
                         models::RobustScaleSign sign) {
  const auto m = static_cast<std::size_t>(series.cols());
  RowMatrix out(series.rows(), static_cast<Eigen::Index>(network_input_dim(model, method, m)));
  for (Eigen::Index r = 0; r < series.rows(); ++r) {
    const std::vector<double> row =
        network_input(model, method, std::span<const double>(series.row(r).data(), m), sign);
    std::copy(row.begin(), row.end(), out.row(r).data());
  }
  return out;
}

std::unique_ptr<nn::Regressor> make_regressor(const NetworkSpec& spec, std::size_t input_dim, Rng& rng) {
  if (const auto* mlp = std::get_if<nn::MlpSpec>(&spec)) {
    if (mlp->input_dim() != input_dim) throw std::invalid_argument("MLP input width mismatch");
    return std::make_unique<nn::MlpRegressor>(*mlp, rng);
  }
  const auto& p = std::get<pen::PenSpec>(spec);
  if (input_dim <= p.extra_dim + p.d) throw std::invalid_argument("PEN input too short");
  return std::make_unique<pen::PenRegressor>(p, input_dim - p.extra_dim, rng);
}

std::unique_ptr<nn::Regressor> make_regressor(const NetworkSpec& spec, std::size_t input_dim,
                                              std::span<const double> params) {
  if (params.size() != count_weights(spec)) throw std::invalid_argument("parameter count mismatch");
  std::unique_ptr<nn::Regressor> net;
  if (const auto* mlp = std::get_if<nn::MlpSpec>(&spec)) {
    if (mlp->input_dim() != input_dim) throw std::invalid_argument("MLP input width mismatch");
    net = std::make_unique<nn::MlpRegressor>(*mlp, nn::zero_weights(*mlp));
  } else {
    const auto& p = std::get<pen::PenSpec>(spec);
    if (input_dim <= p.extra_dim + p.d) throw std::invalid_argument("PEN input too short");
    net = std::make_unique<pen::PenRegressor>(p, pen::zero_weights(p), input_dim - p.extra_dim);
  }
  net->set_parameters(params);
  return net;
}

// --------------------------------------------------------------- weights

namespace {

constexpr std::uint32_t kWeightsVersion = 1;

void put_layers(std::string& out, const nn::MlpSpec& spec) {
  io::put_u32(out, static_cast<std::uint32_t>(spec.layers.size()));
  for (const nn::LayerSpec& l : spec.layers) {
    io::put_u32(out, static_cast<std::uint32_t>(l.in_dim));
    io::put_u32(out, static_cast<std::uint32_t>(l.out_dim));
    io::put_u32(out, static_cast<std::uint32_t>(l.activation));
  }
}

nn::MlpSpec get_layers(std::string_view in, std::size_t& pos) {
  nn::MlpSpec spec;
  const std::uint32_t n = io::get_u32(in, pos);
  if (n == 0 || n > 1024) throw std::runtime_error("weights file: bad layer count");
  for (std::uint32_t i = 0; i < n; ++i) {
    nn::LayerSpec l;
    l.in_dim = io::get_u32(in, pos);
    l.out_dim = io::get_u32(in, pos);
    const std::uint32_t act = io::get_u32(in, pos);
    if (act > 1) throw std::runtime_error("weights file: unknown activation");
    l.activation = static_cast<nn::Activation>(act);
    spec.layers.push_back(l);
  }
  return spec;
}

}  // namespace

std::string encode_network(const StoredNetwork& net) {
  if (net.params.size() != count_weights(net.spec)) {
    throw std::invalid_argument("stored network: parameter count mismatch");
  }
  std::string out(kWeightsMagic);
  io::put_u32(out, kWeightsVersion);
  const auto* pen_spec = std::get_if<pen::PenSpec>(&net.spec);
  io::put_u32(out, pen_spec ? 1U : 0U);
  io::put_u32(out, static_cast<std::uint32_t>(net.input_dim));
  if (pen_spec) {
    io::put_u32(out, static_cast<std::uint32_t>(pen_spec->d));
    io::put_u32(out, static_cast<std::uint32_t>(pen_spec->extra_dim));
    put_layers(out, pen_spec->inner);
    put_layers(out, pen_spec->outer);
  } else {
    put_layers(out, std::get<nn::MlpSpec>(net.spec));
  }
  io::put_u32(out, static_cast<std::uint32_t>(net.params.size()));
  for (double v : net.params) io::put_f64(out, v);
  return out;
}

StoredNetwork decode_network(std::string_view bytes) {
  if (!bytes.starts_with(kWeightsMagic)) throw std::runtime_error("not a network weights file");
  std::size_t pos = kWeightsMagic.size();
  if (io::get_u32(bytes, pos) != kWeightsVersion) throw std::runtime_error("unsupported weights version");
  const std::uint32_t kind = io::get_u32(bytes, pos);
  StoredNetwork net;
  net.input_dim = io::get_u32(bytes, pos);
  try {
    if (kind == 1) {
      pen::PenSpec p;
      p.d = io::get_u32(bytes, pos);
      p.extra_dim = io::get_u32(bytes, pos);
      p.inner = get_layers(bytes, pos);
      p.outer = get_layers(bytes, pos);
      p.validate();
      if (net.input_dim <= p.d + p.extra_dim) throw std::invalid_argument("input width too small");
      net.spec = p;
    } else if (kind == 0) {
      nn::MlpSpec m = get_layers(bytes, pos);
      m.validate();
      if (m.input_dim() != net.input_dim) throw std::invalid_argument("input width mismatch");
      net.spec = m;
    } else {
      throw std::runtime_error("weights file: unknown network kind");
    }
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error(std::string("weights file: inconsistent shapes: ") + e.what());
  }
  const std::uint32_t n = io::get_u32(bytes, pos);
  if (n != count_weights(net.spec)) throw std::runtime_error("weights file: parameter count mismatch");
  if (bytes.size() != pos + static_cast<std::size_t>(n) * 8) {
    throw std::runtime_error("weights file: size does not match header");
  }
  net.params.resize(n);
  for (double& v : net.params) v = io::get_f64(bytes, pos);
  return net;
}

void save_network(const std::filesystem::path& path, const StoredNetwork& net) {
  io::write_file(path, encode_network(net));
}

StoredNetwork load_network(const std::filesystem::path& path) {
  try {
    return decode_network(io::read_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

// -------------------------------------------------------- summary functions

std::vector<double> SummaryFunction::operator()(std::span<const double> y) const {
  RowMatrix one(1, static_cast<Eigen::Index>(y.size()));
  std::copy(y.begin(), y.end(), one.data());
  const RowMatrix s = apply(one);
  return {s.data(), s.data() + s.size()};
}

RowMatrix HandpickedSummary::apply(const RowMatrix& series) const {
  const auto m = static_cast<std::size_t>(series.cols());
  RowMatrix out(series.rows(), static_cast<Eigen::Index>(dim()));
  for (Eigen::Index r = 0; r < series.rows(); ++r) {
    const std::vector<double> s =
        models::handpicked_summaries(model_, std::span<const double>(series.row(r).data(), m));
    std::copy(s.begin(), s.end(), out.row(r).data());
  }
  return out;
}

NetworkSummary::NetworkSummary(ModelId model, Method method, std::unique_ptr<nn::Regressor> net,
                               models::RobustScaleSign sign)
    : model_(model), method_(method), net_(std::move(net)), sign_(sign) {
  if (!net_) throw std::invalid_argument("network summary needs a network");
}

RowMatrix NetworkSummary::apply(const RowMatrix& series) const {
  constexpr Eigen::Index kChunk = 1024;
  RowMatrix out(series.rows(), static_cast<Eigen::Index>(dim()));
  for (Eigen::Index start = 0; start < series.rows(); start += kChunk) {
    const Eigen::Index n = std::min(kChunk, series.rows() - start);
    const RowMatrix inputs = network_inputs(model_, method_, series.middleRows(start, n), sign_);
    if (static_cast<std::size_t>(inputs.cols()) != net_->input_dim()) {
      throw std::invalid_argument("series length does not match the network input");
    }
    out.middleRows(start, n) = net_->predict(inputs);
  }
  return out;
}

std::unique_ptr<SummaryFunction> make_summary(ModelId model, const MethodSpec& method,
                                              const StoredNetwork* network, models::RobustScaleSign sign) {
  validate(model, method);
  if (!method.uses_network()) return std::make_unique<HandpickedSummary>(model);
  if (network == nullptr) throw std::invalid_argument(method.label() + " needs trained weights");
  return std::make_unique<NetworkSummary>(model, method.method,
                                          make_regressor(network->spec, network->input_dim, network->params), sign);
}

std::vector<double> distance_weights(ModelId model, const MethodSpec& method, std::size_t dim) {
  if (model == ModelId::GAndK && method.method == Method::Handpicked) {
    static constexpr double w[] = {0.22, 0.19, 0.53, 2.97, 1.90};
    std::vector<double> out;
    for (double v : w) out.push_back(1.0 / (v * v));
    if (out.size() != dim) throw std::invalid_argument("g-and-k handpicked summaries have dimension 5");
    return out;
  }
  return std::vector<double>(dim, 1.0);
}

}  // namespace penabc::summary
