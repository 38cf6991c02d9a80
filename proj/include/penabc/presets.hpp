// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#ifndef PENABC_PRESETS_HPP
#define PENABC_PRESETS_HPP

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "penabc/models.hpp"
#include "penabc/neuralnet.hpp"
#include "penabc/pen.hpp"

namespace penabc {

using NetworkSpec = std::variant<nn::MlpSpec, pen::PenSpec>;

std::size_t count_weights(const NetworkSpec& spec);

/// Flat key-value text form:
///
///   kind = mlp
///   layers = 100x55:relu, 55x55:relu, 55x25:relu, 25x2:linear
///
///   kind = pen
///   d = 2
///   extra_dim = 0
///   inner = 3x100:relu, 100x50:relu, 50x10:linear
///   outer = 12x50:relu, 50x50:relu, 50x20:relu, 20x2:linear
std::string format_network_spec(const NetworkSpec& spec);
NetworkSpec parse_network_spec(std::string_view text);

}  // namespace penabc

namespace penabc::presets {

enum class NetSize { Small, Large, Pre };

/// Plain MLP of the benchmark tables for the model.
nn::MlpSpec mlp_spec(models::ModelId model, NetSize size);

/// PEN of order d with the benchmark layer widths. d = 0 for the static
/// models; any d for the time-series models (the tables use 0, 2 and 10).
pen::PenSpec pen_spec(models::ModelId model, std::size_t d);

/// Named built-ins: gk-pen0, alpha-pen0, ar2-pen2, ar2-pen0, ma2-pen10,
/// ma2-pen0 and <model>-mlp-{small,large,pre}.
NetworkSpec by_name(std::string_view name);
std::vector<std::string> names();

}  // namespace penabc::presets

#endif  // PENABC_PRESETS_HPP
