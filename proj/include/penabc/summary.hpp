// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_SUMMARY_HPP
#define PENABC_SUMMARY_HPP

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "penabc/models.hpp"
#include "penabc/neuralnet.hpp"
#include "penabc/presets.hpp"

/// Summary-statistic methods: handpicked statistics or a regression network
/// (plain MLP, MLP on the empirical CDF, or PEN) estimating E(theta | y).
namespace penabc::summary {

enum class Method { Handpicked, MlpSmall, MlpLarge, MlpPre, Pen };

std::string_view method_name(Method m) noexcept;
Method parse_method(std::string_view name);

struct MethodSpec {
  Method method = Method::Handpicked;
  std::size_t pen_d = 0;

  /// "handpicked", "mlp-small", "mlp-large", "mlp-pre", "pen-<d>".
  std::string label() const;
  bool uses_network() const noexcept { return method != Method::Handpicked; }

  friend bool operator==(const MethodSpec&, const MethodSpec&) = default;
};

/// Parses a label as produced by MethodSpec::label(); bare "pen" takes the model's default order.
MethodSpec parse_method_spec(std::string_view label, models::ModelId model);

/// 0 for the i.i.d. models, 2 for AR(2), 10 for MA(2).
std::size_t default_pen_order(models::ModelId model) noexcept;

/// Throws ConfigError for pairings the benchmarks do not define (the ECDF
/// network on time series, PEN of order > 0 on i.i.d. data).
void validate(models::ModelId model, const MethodSpec& method);

/// Network architecture for a method, adapted to series length M.
NetworkSpec network_for(models::ModelId model, const MethodSpec& method, std::size_t series_len);

/// Network input for one (already cleaned) series:
///   raw MLP  -> y, or robust-scaled y followed by (Q1, Q3) for alpha-stable;
///   ECDF MLP -> ECDF of y on the model's 100-point grid;
///   PEN      -> same layout as the raw MLP (PEN treats the trailing values as extras).
std::vector<double> network_input(models::ModelId model, Method method, std::span<const double> y,
                                  models::RobustScaleSign sign = models::RobustScaleSign::AsPrinted);
RowMatrix network_inputs(models::ModelId model, Method method, const RowMatrix& series,
                         models::RobustScaleSign sign = models::RobustScaleSign::AsPrinted);
std::size_t network_input_dim(models::ModelId model, Method method, std::size_t series_len);

std::unique_ptr<nn::Regressor> make_regressor(const NetworkSpec& spec, std::size_t input_dim, Rng& rng);
std::unique_ptr<nn::Regressor> make_regressor(const NetworkSpec& spec, std::size_t input_dim,
                                              std::span<const double> params);

// --------------------------------------------------------------- weights

/// Binary snapshot ("PENWTS01"), all integers u32 little-endian:
///   magic, version (1), kind (0 = mlp, 1 = pen), input_dim,
///   [pen only: d, extra_dim], layer blocks (one for mlp; inner then outer
///   for pen) each as n_layers followed by (in, out, activation) per layer,
///   u32 parameter count, then the parameters as little-endian doubles in
///   flatten() order.
inline constexpr std::string_view kWeightsMagic = "PENWTS01";

struct StoredNetwork {
  NetworkSpec spec;
  std::size_t input_dim = 0;
  std::vector<double> params;
};

std::string encode_network(const StoredNetwork& net);
StoredNetwork decode_network(std::string_view bytes);
void save_network(const std::filesystem::path& path, const StoredNetwork& net);
StoredNetwork load_network(const std::filesystem::path& path);

// -------------------------------------------------------- summary functions

class SummaryFunction {
 public:
  virtual ~SummaryFunction() = default;
  virtual std::size_t dim() const = 0;
  /// One summary vector per row of `series`.
  virtual RowMatrix apply(const RowMatrix& series) const = 0;

  std::vector<double> operator()(std::span<const double> y) const;
};

class HandpickedSummary final : public SummaryFunction {
 public:
  explicit HandpickedSummary(models::ModelId model) : model_(model) {}
  std::size_t dim() const override { return models::handpicked_dim(model_); }
  RowMatrix apply(const RowMatrix& series) const override;

 private:
  models::ModelId model_;
};

class NetworkSummary final : public SummaryFunction {
 public:
  NetworkSummary(models::ModelId model, Method method, std::unique_ptr<nn::Regressor> net,
                 models::RobustScaleSign sign = models::RobustScaleSign::AsPrinted);
  std::size_t dim() const override { return net_->output_dim(); }
  RowMatrix apply(const RowMatrix& series) const override;
  const nn::Regressor& network() const noexcept { return *net_; }

 private:
  models::ModelId model_;
  Method method_;
  std::unique_ptr<nn::Regressor> net_;
  models::RobustScaleSign sign_;
};

std::unique_ptr<SummaryFunction> make_summary(models::ModelId model, const MethodSpec& method,
                                              const StoredNetwork* network,
                                              models::RobustScaleSign sign = models::RobustScaleSign::AsPrinted);

/// Diagonal of the distance matrix A: 1/w^2 with w = (0.22, 0.19, 0.53, 2.97, 1.90)
/// for the g-and-k handpicked statistics, ones otherwise.
std::vector<double> distance_weights(models::ModelId model, const MethodSpec& method, std::size_t dim);

}  // namespace penabc::summary

#endif  // PENABC_SUMMARY_HPP
