// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include "penabc/presets.hpp"

#include <map>
#include <stdexcept>

namespace penabc {

namespace {

using nn::Activation;
using nn::MlpSpec;

MlpSpec chain(std::initializer_list<std::size_t> dims, Activation last) {
  MlpSpec spec;
  const std::vector<std::size_t> d(dims);
  for (std::size_t i = 0; i + 1 < d.size(); ++i) {
    spec.layers.push_back({d[i], d[i + 1], i + 2 == d.size() ? last : Activation::Relu});
  }
  return spec;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::size_t to_count(std::string_view s, std::string_view key) {
  s = trim(s);
  std::size_t v = 0;
  if (s.empty()) throw std::invalid_argument("empty value for " + std::string(key));
  for (char c : s) {
    if (c < '0' || c > '9') throw std::invalid_argument("non-integer value for " + std::string(key));
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

}  // namespace

std::size_t count_weights(const NetworkSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, nn::MlpSpec>) {
          return nn::count_weights(s);
        } else {
          return pen::count_weights(s);
        }
      },
      spec);
}

std::string format_network_spec(const NetworkSpec& spec) {
  if (const auto* mlp = std::get_if<nn::MlpSpec>(&spec)) {
    return "kind = mlp\nlayers = " + nn::format_layers(*mlp) + "\n";
  }
  const auto& p = std::get<pen::PenSpec>(spec);
  return "kind = pen\nd = " + std::to_string(p.d) + "\nextra_dim = " + std::to_string(p.extra_dim) +
         "\ninner = " + nn::format_layers(p.inner) + "\nouter = " + nn::format_layers(p.outer) + "\n";
}

NetworkSpec parse_network_spec(std::string_view text) {
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw std::invalid_argument("expected key = value");
    kv[std::string(trim(line.substr(0, eq)))] = std::string(trim(line.substr(eq + 1)));
  }
  const auto get = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw std::invalid_argument("network spec lacks '" + std::string(key) + "'");
    return it->second;
  };
  const std::string& kind = get("kind");
  if (kind == "mlp") return nn::parse_layers(get("layers"));
  if (kind != "pen") throw std::invalid_argument("network kind must be mlp or pen");
  pen::PenSpec p;
  p.d = to_count(get("d"), "d");
  p.extra_dim = kv.contains("extra_dim") ? to_count(kv.find("extra_dim")->second, "extra_dim") : 0;
  p.inner = nn::parse_layers(get("inner"));
  p.outer = nn::parse_layers(get("outer"));
  p.validate();
  return p;
}

}  // namespace penabc

namespace penabc::presets {

using models::ModelId;
using nn::Activation;

nn::MlpSpec mlp_spec(ModelId model, NetSize size) {
  const std::size_t p = models::param_dim(model);
  if (size == NetSize::Pre) {
    if (!models::is_static(model)) {
      throw std::invalid_argument("the ECDF-input network only applies to the i.i.d. models");
    }
    return chain({100, 100, 100, 50, p}, Activation::Linear);
  }
  // Raw input: the series, plus the two robust-scaling quartiles for alpha-stable.
  const std::size_t in = models::default_series_length(model) + (model == ModelId::AlphaStable ? 2 : 0);
  if (size == NetSize::Large) return chain({in, 100, 100, 50, p}, Activation::Linear);
  switch (model) {
    case ModelId::GAndK:
    case ModelId::AlphaStable: return chain({in, 25, 25, 12, p}, Activation::Linear);
    case ModelId::Ar2: return chain({in, 55, 55, 25, p}, Activation::Linear);
    case ModelId::Ma2: return chain({in, 60, 60, 25, p}, Activation::Linear);
  }
  throw std::logic_error("unreachable");
}

pen::PenSpec pen_spec(ModelId model, std::size_t d) {
  pen::PenSpec spec;
  spec.d = d;
  switch (model) {
    case ModelId::GAndK:
    case ModelId::AlphaStable: {
      if (d != 0) throw std::invalid_argument("the i.i.d. models use PEN-0");
      const std::size_t latent = model == ModelId::GAndK ? 10 : 20;
      spec.extra_dim = model == ModelId::AlphaStable ? 2 : 0;
      spec.inner = chain({1, 100, 50, latent}, Activation::Linear);
      spec.outer = chain({latent + spec.extra_dim, 100, 100, 50, 4}, Activation::Linear);
      break;
    }
    case ModelId::Ar2:
      spec.inner = chain({d + 1, 100, 50, 10}, Activation::Linear);
      spec.outer = chain({d + 10, 50, 50, 20, 2}, Activation::Linear);
      break;
    case ModelId::Ma2:
      // The MA(2) tables end the inner network with a relu layer.
      spec.inner = chain({d + 1, 100, 50, 10}, Activation::Relu);
      spec.outer = chain({d + 10, 50, 50, 20, 2}, Activation::Linear);
      break;
  }
  spec.validate();
  return spec;
}

namespace {

struct Entry {
  ModelId model;
  bool is_pen;
  NetSize size;
  std::size_t d;
};

const std::map<std::string, Entry, std::less<>>& registry() {
  static const std::map<std::string, Entry, std::less<>> table = {
      {"gk-pen0", {ModelId::GAndK, true, NetSize::Small, 0}},
      {"alpha-pen0", {ModelId::AlphaStable, true, NetSize::Small, 0}},
      {"ar2-pen0", {ModelId::Ar2, true, NetSize::Small, 0}},
      {"ar2-pen2", {ModelId::Ar2, true, NetSize::Small, 2}},
      {"ma2-pen0", {ModelId::Ma2, true, NetSize::Small, 0}},
      {"ma2-pen10", {ModelId::Ma2, true, NetSize::Small, 10}},
      {"gk-mlp-small", {ModelId::GAndK, false, NetSize::Small, 0}},
      {"gk-mlp-large", {ModelId::GAndK, false, NetSize::Large, 0}},
      {"gk-mlp-pre", {ModelId::GAndK, false, NetSize::Pre, 0}},
      {"alpha-mlp-small", {ModelId::AlphaStable, false, NetSize::Small, 0}},
      {"alpha-mlp-large", {ModelId::AlphaStable, false, NetSize::Large, 0}},
      {"alpha-mlp-pre", {ModelId::AlphaStable, false, NetSize::Pre, 0}},
      {"ar2-mlp-small", {ModelId::Ar2, false, NetSize::Small, 0}},
      {"ar2-mlp-large", {ModelId::Ar2, false, NetSize::Large, 0}},
      {"ma2-mlp-small", {ModelId::Ma2, false, NetSize::Small, 0}},
      {"ma2-mlp-large", {ModelId::Ma2, false, NetSize::Large, 0}},
  };
  return table;
}

}  // namespace

NetworkSpec by_name(std::string_view name) {
  const auto it = registry().find(name);
  if (it == registry().end()) throw ConfigError("unknown network preset '" + std::string(name) + "'");
  const Entry& e = it->second;
  if (e.is_pen) return pen_spec(e.model, e.d);
  return mlp_spec(e.model, e.size);
}

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [name, entry] : registry()) out.push_back(name);
  return out;
}

}  // namespace penabc::presets
