// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the penabc project.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "penabc/dataset_io.hpp"
#include "penabc/experiment.hpp"
#include "penabc/presets.hpp"

namespace {

using penabc::ConfigError;
namespace ex = penabc::experiment;

struct CommonFlags {
  std::string config;
  std::string model;
  std::string scale;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::string output;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Experiment config file (key = value lines)");
  cmd->add_option("--model", f.model, "Model when no config is given: gandk, alpha-stable, ar2, ma2");
  cmd->add_option("--scale", f.scale, "smoke, desk or paper");
  cmd->add_option("--seed", f.seed, "Top-level seed");
  cmd->add_option("--threads", f.threads, "Worker threads (0 = all cores)");
  cmd->add_option("--output", f.output, "Output directory");
}

ex::ExperimentConfig load_config(const CommonFlags& f) {
  std::optional<ex::Scale> scale;
  if (!f.scale.empty()) scale = ex::parse_scale(f.scale);
  ex::ExperimentConfig cfg;
  if (!f.config.empty()) {
    std::string text;
    try {
      text = penabc::io::read_file(f.config);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
    if (!f.model.empty()) text += "\nmodel = " + f.model + "\n";
    cfg = ex::parse_config(text, scale);
  } else {
    if (f.model.empty()) throw ConfigError("pass --config or --model");
    cfg = ex::defaults(penabc::models::parse_model(f.model), scale.value_or(ex::Scale::Desk));
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.threads) cfg.threads = *f.threads;
  if (!f.output.empty()) cfg.output_dir = f.output;
  ex::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  penabc::tune_allocator();
  CLI::App app{"penabc: learned ABC summary statistics with partially exchangeable networks"};
  app.require_subcommand(1);

  CommonFlags flags;
  auto* simulate = app.add_subcommand("simulate", "Simulate observed data, reference table and training pairs");
  auto* train = app.add_subcommand("train", "Train the summary networks");
  auto* abc = app.add_subcommand("abc", "Run rejection ABC for every method");
  auto* evaluate = app.add_subcommand("evaluate", "Score ABC posteriors against reference posteriors");
  auto* run = app.add_subcommand("run", "All four stages in order");
  for (auto* cmd : {simulate, train, abc, evaluate, run}) add_common(cmd, flags);

  auto* show = app.add_subcommand("config", "Print the effective configuration");
  add_common(show, flags);

  std::string preset;
  auto* presets_cmd = app.add_subcommand("preset", "Print a built-in network architecture");
  presets_cmd->add_option("name", preset, "Preset name (omit to list)");

  std::string repro_id;
  std::string repro_scale = "desk";
  std::uint64_t repro_seed = 1;
  std::size_t repro_threads = 1;
  std::string repro_out = "penabc-reproduce";
  auto* reproduce = app.add_subcommand("reproduce", "Regenerate a figure or table as CSV");
  reproduce->add_option("id", repro_id, "fig1, table1, fig3 or fig4")->required();
  reproduce->add_option("--scale", repro_scale, "smoke, desk or paper");
  reproduce->add_option("--seed", repro_seed, "Top-level seed");
  reproduce->add_option("--threads", repro_threads, "Worker threads (0 = all cores)");
  reproduce->add_option("--output", repro_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (presets_cmd->parsed()) {
      if (preset.empty()) {
        for (const auto& n : penabc::presets::names()) std::cout << n << '\n';
      } else {
        const auto spec = penabc::presets::by_name(preset);
        std::cout << penabc::format_network_spec(spec) << "# weights = " << penabc::count_weights(spec) << '\n';
      }
      return 0;
    }
    if (reproduce->parsed()) {
      ex::cmd_reproduce(repro_id, ex::parse_scale(repro_scale), repro_seed, repro_threads, repro_out, std::cerr);
      return 0;
    }
    const ex::ExperimentConfig cfg = load_config(flags);
    if (show->parsed()) {
      std::cout << ex::format_config(cfg);
    } else if (simulate->parsed()) {
      ex::cmd_simulate(cfg, std::cerr);
    } else if (train->parsed()) {
      ex::cmd_train(cfg, std::cerr);
    } else if (abc->parsed()) {
      ex::cmd_abc(cfg, std::cerr);
    } else if (evaluate->parsed()) {
      ex::cmd_evaluate(cfg, std::cerr);
    } else if (run->parsed()) {
      ex::run_pipeline(cfg, std::cerr);
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
